"""Pruning-mask generation.

Retained weights are drawn from a magnitude-derived distribution instead
of being fixed by a top-k cut.  The pieces:

* ``derive_sampling_probs`` — normalized |w|^power over a restricted
  support of near-boundary magnitudes; pruned (zero) weights never get
  probability mass.
* ``sample_without_replacement`` — k distinct indices with the same
  distribution as sequential weighted draws without replacement,
  implemented as a one-pass key scheme.
* ``build_ensemble_mask`` — element-wise sum of several sampled masks,
  thresholded back to k ones; more masks means the result hews closer
  to the deterministic top-k cut.
* ``deterministic_topk_mask`` — the classic magnitude cut, also the
  reference point for the divergence metric.
* ``introduced_randomness`` — how far a sampled mask's pruned set
  strays from the deterministic pruned set.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .numeric import ceil_count
from .validation import check_mask, check_weight_vector

SCHEDULE_KINDS = ("decrease", "increase")


@dataclass
class SamplingConfig:
    """Knobs for randomized mask generation.

    sampling_ratio scales how many masks are ensembled per stage (see
    ``schedule.masks_count``).  sharpening_power is the exponent applied
    to normalized magnitudes: larger values spread the probabilities of
    large and small magnitudes apart, cutting randomness faster.
    range_multiplier restricts sampling to the top ``range_multiplier *
    k`` magnitudes, so only weights near the pruning boundary are ever
    in play.  schedule_kind selects whether ensemble size grows with the
    pruned count ("decrease"d randomness) or the kept count ("increase").
    """

    sampling_ratio: float = 0.01
    sharpening_power: int = 5
    range_multiplier: float = 2.0
    schedule_kind: str = "decrease"

    def __post_init__(self):
        if self.sampling_ratio <= 0:
            raise ValueError(f"sampling_ratio must be > 0, got {self.sampling_ratio}")
        if self.sharpening_power < 1:
            raise ValueError(
                f"sharpening_power must be >= 1, got {self.sharpening_power}"
            )
        if self.range_multiplier < 1:
            raise ValueError(
                f"range_multiplier must be >= 1, got {self.range_multiplier}"
            )
        if self.schedule_kind not in SCHEDULE_KINDS:
            raise ValueError(
                f"schedule_kind must be one of {SCHEDULE_KINDS}, "
                f"got {self.schedule_kind!r}"
            )


def _magnitude_order(magnitudes: np.ndarray) -> np.ndarray:
    """Indices sorted by magnitude descending, ties broken by lower index."""
    return np.lexsort((np.arange(magnitudes.size), -magnitudes))


def derive_sampling_probs(
    weights, n_keep: int, config: SamplingConfig
) -> np.ndarray:
    """Sampling distribution over weight indices.

    Probabilities are proportional to |w|**sharpening_power, restricted
    to the support of the top ``ceil(range_multiplier * n_keep)``
    magnitudes (all nonzero indices when that exceeds the nonzero
    count), then renormalized.  Entries outside the support are exactly
    zero, so already-pruned weights can never be re-sampled.

    Raises ValueError when fewer than ``n_keep`` weights are nonzero.
    """
    w = check_weight_vector(weights)
    if n_keep < 1:
        raise ValueError(f"n_keep must be >= 1, got {n_keep}")
    mag = np.abs(w)
    n_nonzero = int(np.count_nonzero(mag))
    if n_nonzero < n_keep:
        raise ValueError(
            f"cannot retain {n_keep} weights: only {n_nonzero} are nonzero"
        )
    width = min(n_nonzero, ceil_count(config.range_multiplier * n_keep))
    support = _magnitude_order(mag)[:width]
    # Scale by the max before exponentiating; renormalization cancels the
    # factor and the power of a ratio <= 1 cannot overflow.
    scores = (mag[support] / mag[support].max()) ** config.sharpening_power
    probs = np.zeros(w.size, dtype=np.float64)
    probs[support] = scores / scores.sum()
    return probs


def sample_without_replacement(
    probs, n_keep: int, rng: np.random.Generator, n_draws: int | None = None
) -> np.ndarray:
    """Draw ``n_keep`` distinct indices proportional to ``probs``.

    The distribution equals sequential weighted draws without
    replacement (each draw proportional to the remaining probabilities).
    Implemented as the one-pass key scheme: index i gets key
    ``u_i ** (1 / p_i)`` for uniform ``u_i`` and the largest n_keep keys
    win.  Keys are compared in the log domain (``log(u_i) / p_i``),
    which preserves their ordering.

    With ``n_draws=None`` returns one sorted index array of shape
    ``(n_keep,)``; with an integer ``n_draws`` returns ``(n_draws,
    n_keep)`` of independent draws from a single pass over ``rng``.
    """
    p = np.asarray(probs, dtype=np.float64).ravel()
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    support = np.flatnonzero(p > 0)
    if support.size < n_keep:
        raise ValueError(
            f"support has {support.size} indices, cannot draw {n_keep} "
            "without replacement"
        )
    m = 1 if n_draws is None else int(n_draws)
    if m < 1:
        raise ValueError(f"n_draws must be >= 1, got {n_draws}")

    if support.size == n_keep:
        chosen = np.tile(np.sort(support), (m, 1))
    else:
        u = rng.random((m, support.size))
        with np.errstate(divide="ignore"):
            keys = np.log(u) / p[support]
        top = np.argpartition(keys, support.size - n_keep, axis=1)[:, -n_keep:]
        chosen = np.sort(support[top], axis=1)
    return chosen[0] if n_draws is None else chosen


def deterministic_topk_mask(weights, n_keep: int) -> np.ndarray:
    """Binary mask retaining the ``n_keep`` largest magnitudes.

    Magnitude ties are broken toward the lower index.  The smallest
    retained magnitude is the pruning boundary of the cut.
    """
    w = check_weight_vector(weights)
    if not 0 < n_keep <= w.size:
        raise ValueError(f"n_keep must be in [1, {w.size}], got {n_keep}")
    mask = np.zeros(w.size, dtype=np.uint8)
    mask[_magnitude_order(np.abs(w))[:n_keep]] = 1
    return mask


def build_ensemble_mask(
    weights,
    n_keep: int,
    n_masks: int,
    config: SamplingConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``n_masks`` index sets and threshold their element-wise sum.

    Occurrence counts are accumulated over the sampled sets and the
    ``n_keep`` most frequent indices form the mask; count ties are
    broken by larger magnitude, then lower index, so the infinite-
    ensemble limit coincides with ``deterministic_topk_mask``.

    Returns ``(mask, counts)`` where ``counts`` sums to
    ``n_masks * n_keep``.
    """
    if n_masks < 1:
        raise ValueError(f"n_masks must be >= 1, got {n_masks}")
    w = check_weight_vector(weights)
    probs = derive_sampling_probs(w, n_keep, config)
    draws = sample_without_replacement(probs, n_keep, rng, n_draws=n_masks)
    counts = np.bincount(draws.ravel(), minlength=w.size).astype(np.int64)
    order = np.lexsort((np.arange(w.size), -np.abs(w), -counts))
    mask = np.zeros(w.size, dtype=np.uint8)
    mask[order[:n_keep]] = 1
    return mask, counts


def introduced_randomness(reference_mask, sampled_mask) -> float:
    """Divergence of a sampled mask's pruned set from the reference's.

    With C total weights, k retained in both masks, and C_s weights
    pruned by both, the metric is ``(C - k - C_s) / C_s``: zero iff the
    masks agree, growing as the pruned sets drift apart.  When the
    pruned sets are disjoint (C_s == 0) the metric is infinite; that is
    reported as ``math.inf`` with a warning rather than an error.
    """
    ref = check_mask(reference_mask, "reference_mask").astype(bool)
    samp = check_mask(sampled_mask, "sampled_mask").astype(bool)
    if ref.size != samp.size:
        raise ValueError(
            f"mask lengths differ: {ref.size} vs {samp.size}"
        )
    k_ref = int(ref.sum())
    k_samp = int(samp.sum())
    if k_ref != k_samp:
        raise ValueError(
            f"masks retain different counts: {k_ref} vs {k_samp}"
        )
    if k_ref >= ref.size:
        raise ValueError("masks prune nothing; divergence is undefined")
    n_pruned = ref.size - k_ref
    both_pruned = int(np.count_nonzero(~ref & ~samp))
    if both_pruned == 0:
        warnings.warn(
            "pruned sets are disjoint; introduced randomness is infinite",
            RuntimeWarning,
            stacklevel=2,
        )
        return math.inf
    return (n_pruned - both_pruned) / both_pruned
