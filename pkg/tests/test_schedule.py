import pytest

from randprune.masks import SamplingConfig
from randprune.schedule import (
    masks_count,
    pruned_count,
    stage_context,
    validate_schedule,
)


class TestMasksCount:
    def test_decrease_scales_with_pruned(self):
        assert masks_count("decrease", 0.01, 10_000, 0.83) == 83

    def test_increase_scales_with_kept(self):
        assert masks_count("increase", 0.01, 10_000, 0.83) == 17

    def test_clamped_to_one(self):
        # 5e-5 * 5400 = 0.27 floors to zero, clamped up so a mask exists
        assert masks_count("decrease", 5e-5, 10_000, 0.54) == 1

    def test_decimal_ratio_rounding(self):
        # 0.83 * 10000 is a hair above 8300 in binary; the count must
        # still be the decimal-intended 8300
        assert pruned_count(10_000, 0.83) == 8300
        assert pruned_count(10, 0.5) == 5

    def test_bad_inputs_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            masks_count("cubic", 0.01, 100, 0.5)
        with pytest.raises(ValueError, match="sampling_ratio"):
            masks_count("decrease", 0.0, 100, 0.5)
        with pytest.raises(ValueError, match="sparsity"):
            masks_count("decrease", 0.01, 100, 1.0)
        with pytest.raises(ValueError, match="at least 2"):
            masks_count("decrease", 0.01, 1, 0.5)

    def test_monotone_in_sparsity(self):
        sparsities = [i / 20 for i in range(1, 20)]
        for total in (128, 1000, 4096):
            dec = [masks_count("decrease", 0.01, total, s) for s in sparsities]
            inc = [masks_count("increase", 0.01, total, s) for s in sparsities]
            assert all(b >= a for a, b in zip(dec, dec[1:]))
            assert all(b <= a for a, b in zip(inc, inc[1:]))
            assert all(m >= 1 for m in dec + inc)


class TestValidateSchedule:
    def test_four_stage_schedule(self):
        stages = [0.54, 0.83, 0.91, 0.9375]
        assert validate_schedule(stages) == stages

    def test_nine_stage_schedule(self):
        stages = [0.54, 0.83, 0.875, 0.9, 0.92, 0.9275, 0.93, 0.935, 0.9375]
        assert validate_schedule(stages) == stages

    def test_flat_schedule_rejected(self):
        with pytest.raises(ValueError, match="entry 1"):
            validate_schedule([0.5, 0.5])

    def test_out_of_range_rejected_with_index(self):
        with pytest.raises(ValueError, match="entry 2"):
            validate_schedule([0.3, 0.6, 1.0])

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            validate_schedule([])


class TestStageContext:
    def test_counts_are_consistent(self):
        ctx = stage_context(1, 0.83, [64, 1024, 64], SamplingConfig())
        for total, x, k, m in zip(
            ctx.layer_sizes, ctx.zeros, ctx.keeps, ctx.n_masks
        ):
            assert x + k == total
            assert k >= 1
            assert m >= 1
        assert ctx.zeros == [pruned_count(64, 0.83), pruned_count(1024, 0.83),
                             pruned_count(64, 0.83)]

    def test_layer_too_small_rejected(self):
        with pytest.raises(ValueError, match="layer 0"):
            stage_context(0, 0.99, [50], SamplingConfig())
