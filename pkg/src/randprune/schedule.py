"""Sparsity schedules and per-stage counting rules."""

from __future__ import annotations

from dataclasses import dataclass

from .masks import SCHEDULE_KINDS, SamplingConfig
from .numeric import ceil_count, floor_count


def validate_schedule(stages) -> list[float]:
    """Return the schedule as a list, or raise naming the offending index.

    A valid schedule is non-empty, strictly increasing, with every
    sparsity in the open interval (0, 1).
    """
    stages = list(stages)
    if not stages:
        raise ValueError("sparsity schedule is empty")
    for i, s in enumerate(stages):
        s = float(s)
        if not 0.0 < s < 1.0:
            raise ValueError(
                f"schedule entry {i} is {s}; sparsities must lie in (0, 1)"
            )
        if i > 0 and s <= stages[i - 1]:
            raise ValueError(
                f"schedule entry {i} ({s}) does not increase over entry "
                f"{i - 1} ({stages[i - 1]})"
            )
        stages[i] = s
    return stages


def pruned_count(total: int, sparsity: float) -> int:
    """Number of zeros a layer of ``total`` weights has at ``sparsity``."""
    return ceil_count(total * sparsity)


def masks_count(kind: str, sampling_ratio: float, total: int, sparsity: float) -> int:
    """How many masks to ensemble for one layer at one stage.

    "decrease" scales with the pruned count, so randomness shrinks as
    pruning deepens; "increase" scales with the kept count, doing the
    opposite.  Always at least 1 so a mask can be built at all.
    """
    if kind not in SCHEDULE_KINDS:
        raise ValueError(f"kind must be one of {SCHEDULE_KINDS}, got {kind!r}")
    if sampling_ratio <= 0:
        raise ValueError(f"sampling_ratio must be > 0, got {sampling_ratio}")
    if total < 2:
        raise ValueError(f"layer must have at least 2 weights, got {total}")
    if not 0.0 < sparsity < 1.0:
        raise ValueError(f"sparsity must lie in (0, 1), got {sparsity}")
    n_pruned = pruned_count(total, sparsity)
    basis = n_pruned if kind == "decrease" else total - n_pruned
    return max(1, floor_count(sampling_ratio * basis))


@dataclass
class StageContext:
    """Per-stage counts for every prunable layer."""

    index: int
    sparsity: float
    layer_sizes: list[int]   # total weights per layer
    zeros: list[int]         # pruned per layer at this stage
    keeps: list[int]         # retained per layer at this stage
    n_masks: list[int]       # ensemble size per layer


def stage_context(
    index: int, sparsity: float, layer_sizes, config: SamplingConfig
) -> StageContext:
    """Resolve the counting rules for one stage across all layers."""
    zeros, keeps, masks = [], [], []
    for li, total in enumerate(layer_sizes):
        x = pruned_count(total, sparsity)
        k = total - x
        if k < 1:
            raise ValueError(
                f"layer {li} with {total} weights cannot reach sparsity "
                f"{sparsity}: no weights would remain"
            )
        zeros.append(x)
        keeps.append(k)
        masks.append(
            masks_count(config.schedule_kind, config.sampling_ratio, total, sparsity)
        )
    return StageContext(
        index=index,
        sparsity=float(sparsity),
        layer_sizes=list(layer_sizes),
        zeros=zeros,
        keeps=keeps,
        n_masks=masks,
    )
