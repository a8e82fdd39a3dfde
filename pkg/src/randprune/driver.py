"""Iterative magnitude pruning with randomized mask candidates.

Per stage: snapshot the model, build a pool of candidate masks (one
deterministic top-k plus sampled ensembles), score each candidate by a
single high-learning-rate epoch on an isolated copy, keep the best
scorer, rewind to the snapshot, apply the winning mask, and finetune to
convergence.  Candidate scoring streams are keyed by candidate id, never
by evaluation order, so serial and parallel runs agree bitwise.
"""

from __future__ import annotations

import copy
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import seeding
from .datasets import Dataset
from .masks import (
    SamplingConfig,
    build_ensemble_mask,
    deterministic_topk_mask,
    introduced_randomness,
)
from .nn import (
    KDConfig,
    MaskedNetwork,
    ModelSnapshot,
    OptimizerState,
    evaluate,
    init_optimizer,
    restore,
    snapshot,
    train_one_epoch,
)
from .schedule import StageContext, stage_context, validate_schedule

ORIGIN_DETERMINISTIC = "deterministic"
ORIGIN_SAMPLED = "sampled"


@dataclass
class PruneRunConfig:
    schedule: list
    n_candidates: int = 8
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    optimizer: str = "adam"
    base_lr: float = 0.01
    emep_lr_multiplier: float = 5.0
    batch_size: int = 32
    finetune_epochs_max: int = 30
    convergence_patience: int = 5
    kd: KDConfig = field(default_factory=KDConfig)
    seed: int = 0

    def __post_init__(self):
        self.schedule = validate_schedule(self.schedule)
        if self.n_candidates < 1:
            raise ValueError(f"n_candidates must be >= 1, got {self.n_candidates}")
        if self.emep_lr_multiplier <= 1:
            raise ValueError(
                f"emep_lr_multiplier must be > 1, got {self.emep_lr_multiplier}"
            )
        if self.base_lr <= 0:
            raise ValueError(f"base_lr must be > 0, got {self.base_lr}")
        if self.finetune_epochs_max < 1:
            raise ValueError(
                f"finetune_epochs_max must be >= 1, got {self.finetune_epochs_max}"
            )
        if self.convergence_patience < 1:
            raise ValueError(
                f"convergence_patience must be >= 1, got {self.convergence_patience}"
            )


@dataclass
class CandidateMask:
    id: int
    origin: str
    masks: list[np.ndarray]          # one flat mask per layer
    ir_per_layer: list[float]
    emep_score: Optional[float] = None
    emep_loss: Optional[float] = None

    @property
    def ir_mean(self) -> float:
        return float(np.mean(self.ir_per_layer))


@dataclass
class CandidateRecord:
    id: int
    origin: str
    ir_mean: float
    emep_score: float
    emep_loss: float


@dataclass
class StageReport:
    stage: int
    sparsity: float
    candidates: list[CandidateRecord]
    winner_id: int
    winner_origin: str
    winner_ir_mean: float
    val_accuracy: float
    val_loss: float
    epochs: int
    wall_ms: float


class PruneRunError(RuntimeError):
    """A stage failed; ``reports`` holds the stages completed so far."""

    def __init__(self, message: str, reports: list[StageReport]):
        super().__init__(message)
        self.reports = reports


def _flat_weights(net: MaskedNetwork) -> list[np.ndarray]:
    return [l.weights.ravel() for l in net.network.layers]


def _shaped_masks(net: MaskedNetwork, flat_masks: list[np.ndarray]) -> list[np.ndarray]:
    return [
        m.reshape(l.weights.shape)
        for m, l in zip(flat_masks, net.network.layers)
    ]


def generate_candidates(
    net: MaskedNetwork, ctx: StageContext, cfg: PruneRunConfig
) -> list[CandidateMask]:
    """Candidate pool for one stage.

    Candidate 0 is the deterministic per-layer top-k mask; the rest are
    per-layer ensemble masks drawn from streams keyed by (seed, stage,
    candidate, layer).  Each candidate records its per-layer divergence
    from candidate 0.
    """
    flats = _flat_weights(net)
    det = [deterministic_topk_mask(w, k) for w, k in zip(flats, ctx.keeps)]
    pool = [
        CandidateMask(
            id=0,
            origin=ORIGIN_DETERMINISTIC,
            masks=det,
            ir_per_layer=[0.0] * len(det),
        )
    ]
    for cid in range(1, cfg.n_candidates):
        layer_masks, irs = [], []
        for li, (w, k, m) in enumerate(zip(flats, ctx.keeps, ctx.n_masks)):
            rng = seeding.stream(cfg.seed, seeding.TAG_MASK, ctx.index, cid, li)
            mask, _ = build_ensemble_mask(w, k, m, cfg.sampling, rng)
            layer_masks.append(mask)
            irs.append(introduced_randomness(det[li], mask))
        pool.append(
            CandidateMask(
                id=cid, origin=ORIGIN_SAMPLED, masks=layer_masks, ir_per_layer=irs
            )
        )
    return pool


def emep_score(
    net: MaskedNetwork,
    opt: OptimizerState,
    candidate: CandidateMask,
    train: Dataset,
    val: Dataset,
    cfg: PruneRunConfig,
    stage_index: int,
    teacher: Optional[MaskedNetwork] = None,
) -> tuple[float, float]:
    """Score one candidate by a single boosted-learning-rate epoch.

    Applies the candidate's masks, trains exactly one epoch at
    ``base_lr * emep_lr_multiplier``, and reads validation accuracy and
    loss.  ``net`` and ``opt`` must be in the stage-start state on entry
    and are restored to it bitwise before returning.
    """
    snap = snapshot(net, opt)
    try:
        net.set_masks(_shaped_masks(net, candidate.masks))
        opt.learning_rate = cfg.base_lr * cfg.emep_lr_multiplier
        rng = seeding.stream(cfg.seed, seeding.TAG_EMEP, stage_index, candidate.id)
        train_one_epoch(
            net,
            train,
            opt,
            rng,
            batch_size=cfg.batch_size,
            kd=cfg.kd,
            teacher=teacher,
        )
        result = evaluate(net, val)
    finally:
        restore(net, opt, snap)
    return result.accuracy, result.loss


def mcss_select(candidates: list[CandidateMask]) -> CandidateMask:
    """Best-scoring candidate; ties fall to lower loss, then lower id."""
    if not candidates:
        raise ValueError("candidate pool is empty")
    for c in candidates:
        if c.emep_score is None or c.emep_loss is None:
            raise ValueError(f"candidate {c.id} has not been scored")
    return min(candidates, key=lambda c: (-c.emep_score, c.emep_loss, c.id))


def _train_until_converged(
    net: MaskedNetwork,
    opt: OptimizerState,
    train: Dataset,
    val: Dataset,
    cfg: PruneRunConfig,
    epoch_stream: Callable[[int], np.random.Generator],
    kd: Optional[KDConfig] = None,
    teacher: Optional[MaskedNetwork] = None,
) -> int:
    """Epochs at base_lr until validation loss stalls; returns epoch count."""
    best = np.inf
    stale = 0
    epochs = 0
    for epoch in range(cfg.finetune_epochs_max):
        train_one_epoch(
            net,
            train,
            opt,
            epoch_stream(epoch),
            batch_size=cfg.batch_size,
            kd=kd,
            teacher=teacher,
        )
        epochs += 1
        loss = evaluate(net, val).loss
        if loss < best:
            best = loss
            stale = 0
        else:
            stale += 1
            if stale >= cfg.convergence_patience:
                break
    return epochs


def _score_pool(
    net: MaskedNetwork,
    opt: OptimizerState,
    pool: list[CandidateMask],
    train: Dataset,
    val: Dataset,
    cfg: PruneRunConfig,
    stage_index: int,
    teacher: Optional[MaskedNetwork],
    n_jobs: int,
) -> None:
    """Score every candidate on an isolated copy of the stage-start state."""

    def score_one(candidate: CandidateMask) -> tuple[float, float]:
        net_c = net.clone()
        opt_c = copy.deepcopy(opt)
        return emep_score(
            net_c, opt_c, candidate, train, val, cfg, stage_index, teacher
        )

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool_exec:
            results = list(pool_exec.map(score_one, pool))
    else:
        results = [score_one(c) for c in pool]
    for candidate, (acc, loss) in zip(pool, results):
        candidate.emep_score = acc
        candidate.emep_loss = loss


def imp_run(
    net: MaskedNetwork,
    cfg: PruneRunConfig,
    train: Dataset,
    val: Dataset,
    n_jobs: int = 1,
    stage_start_hook: Optional[Callable] = None,
    candidate_hook: Optional[Callable] = None,
    selection_hook: Optional[Callable] = None,
    stage_hook: Optional[Callable] = None,
) -> tuple[MaskedNetwork, list[StageReport]]:
    """Run the full pipeline; returns the sparse net and one report per stage.

    The dense model is first trained to convergence (it becomes the
    distillation teacher when enabled).  Any stage failure raises
    PruneRunError carrying the reports completed so far.  The hooks are
    optional observers: stage_start_hook(stage, net, ctx) before
    candidate generation, candidate_hook(stage, candidate, net, opt,
    snap) after each candidate is scored, selection_hook(stage, winner,
    net, opt, snap) after selection but before the winner is applied,
    stage_hook(stage, net, opt, report) at stage end.
    """
    if len(train) == 0 or len(val) == 0:
        raise ValueError("train and validation datasets must be non-empty")
    opt = init_optimizer(net, cfg.optimizer, cfg.base_lr)
    _train_until_converged(
        net,
        opt,
        train,
        val,
        cfg,
        lambda e: seeding.stream(cfg.seed, seeding.TAG_DENSE, e),
    )
    teacher = net.clone() if cfg.kd.enabled else None

    layer_sizes = [l.weights.size for l in net.network.layers]
    reports: list[StageReport] = []
    for t, sparsity in enumerate(cfg.schedule):
        started = time.perf_counter()
        try:
            ctx = stage_context(t, sparsity, layer_sizes, cfg.sampling)
            if stage_start_hook is not None:
                stage_start_hook(t, net, ctx)
            snap = snapshot(net, opt)
            pool = generate_candidates(net, ctx, cfg)
            _score_pool(net, opt, pool, train, val, cfg, t, teacher, n_jobs)
            if candidate_hook is not None:
                for candidate in pool:
                    candidate_hook(t, candidate, net, opt, snap)
            winner = mcss_select(pool)
            if selection_hook is not None:
                selection_hook(t, winner, net, opt, snap)
            restore(net, opt, snap)
            net.set_masks(_shaped_masks(net, winner.masks))
            epochs = _train_until_converged(
                net,
                opt,
                train,
                val,
                cfg,
                lambda e, stage=t: seeding.stream(
                    cfg.seed, seeding.TAG_FINETUNE, stage, e
                ),
                kd=cfg.kd,
                teacher=teacher,
            )
            result = evaluate(net, val)
            report = StageReport(
                stage=t,
                sparsity=sparsity,
                candidates=[
                    CandidateRecord(
                        c.id, c.origin, c.ir_mean, c.emep_score, c.emep_loss
                    )
                    for c in pool
                ],
                winner_id=winner.id,
                winner_origin=winner.origin,
                winner_ir_mean=winner.ir_mean,
                val_accuracy=result.accuracy,
                val_loss=result.loss,
                epochs=epochs,
                wall_ms=(time.perf_counter() - started) * 1000.0,
            )
            reports.append(report)
            if stage_hook is not None:
                stage_hook(t, net, opt, report)
        except PruneRunError:
            raise
        except Exception as exc:
            raise PruneRunError(
                f"stage {t} (sparsity {sparsity}) failed: {exc}", reports
            ) from exc
    return net, reports
