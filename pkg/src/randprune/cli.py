"""Command-line front end: experiment runs, run comparison, weight histograms.

Config files are flat ``key = value`` text with dotted keys (see
DEFAULTS for the schema); any key can be overridden on the command line
as ``--key value``.  All emitted files are deterministic functions of
the config and seeds, except the wall-clock column in stages.csv.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import seeding
from .datasets import generate_synthetic, load_csv, standardize_pair, stratified_split
from .driver import PruneRunConfig, PruneRunError, imp_run
from .masks import SamplingConfig
from .nn import KDConfig, MaskedNetwork, init_network
from .numeric import ceil_count

SCHEMA_LINE = "# schema=1"

STAGES_HEADER = [
    "seed", "stage", "sparsity", "winner_origin", "winner_ir_mean",
    "val_acc", "val_loss", "epochs", "wall_ms",
]
CANDIDATES_HEADER = [
    "seed", "stage", "candidate_id", "origin", "ir_mean", "emep_score",
]
HIST_HEADER = [
    "seed", "layer", "bin_index", "bin_low", "bin_high", "count",
    "tau", "near_boundary_fraction",
]

DEFAULTS = {
    "dataset.kind": "moons",          # moons | blobs | spirals | csv
    "dataset.path": "",               # CSV path when kind=csv
    "dataset.label_column": "y",      # CSV label column (name or index)
    "dataset.n": "2000",
    "dataset.noise": "0.2",
    "dataset.classes": "2",           # blobs only
    "dataset.val_fraction": "0.2",
    "network.hidden": "32,32",
    "network.activation": "relu",
    "prune.schedule": "0.54,0.83,0.91,0.9375",
    "prune.n_candidates": "8",
    "prune.sampling_ratio": "0.01",
    "prune.sharpening_power": "5",
    "prune.range_multiplier": "2.0",
    "prune.randomness_schedule": "decrease",
    "prune.optimizer": "adam",
    "prune.base_lr": "0.01",
    "prune.emep_lr_multiplier": "5.0",
    "prune.batch_size": "32",
    "prune.finetune_epochs_max": "30",
    "prune.convergence_patience": "5",
    "kd.enabled": "false",
    "kd.hidden_weight": "1.0",
    "kd.output_weight": "1.0",
    "run.seeds": "0",
    "run.out": "runs/out",
    "run.dump_weights": "false",
}


class ConfigError(Exception):
    def __init__(self, problems: list[str]):
        super().__init__("; ".join(problems))
        self.problems = problems


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat ``key = value`` lines; '#' starts a comment."""
    raw: dict[str, str] = {}
    problems = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems.append(f"{source}:{lineno}: expected 'key = value', got {line!r}")
            continue
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            problems.append(f"{source}:{lineno}: unknown key {key!r}")
            continue
        raw[key] = value
    if problems:
        raise ConfigError(problems)
    return raw


def _parse_bool(value: str) -> bool:
    low = value.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _parse_list(value: str, cast):
    return [cast(part.strip()) for part in value.split(",") if part.strip()]


def resolve_config(raw: dict[str, str]) -> dict:
    """Typed config from raw strings, collecting all field errors."""
    merged = dict(DEFAULTS)
    merged.update(raw)
    cfg: dict = {}
    problems = []

    def take(key, cast):
        try:
            cfg[key] = cast(merged[key])
        except (ValueError, TypeError) as exc:
            problems.append(f"{key}: {exc}")

    take("dataset.kind", str)
    take("dataset.path", str)
    take("dataset.label_column", str)
    take("dataset.n", int)
    take("dataset.noise", float)
    take("dataset.classes", int)
    take("dataset.val_fraction", float)
    take("network.hidden", lambda v: _parse_list(v, int))
    take("network.activation", str)
    take("prune.schedule", lambda v: _parse_list(v, float))
    take("prune.n_candidates", int)
    take("prune.sampling_ratio", float)
    take("prune.sharpening_power", int)
    take("prune.range_multiplier", float)
    take("prune.randomness_schedule", str)
    take("prune.optimizer", str)
    take("prune.base_lr", float)
    take("prune.emep_lr_multiplier", float)
    take("prune.batch_size", int)
    take("prune.finetune_epochs_max", int)
    take("prune.convergence_patience", int)
    take("kd.enabled", _parse_bool)
    take("kd.hidden_weight", float)
    take("kd.output_weight", float)
    take("run.seeds", lambda v: _parse_list(v, int))
    take("run.out", str)
    take("run.dump_weights", _parse_bool)
    if problems:
        raise ConfigError(problems)

    if cfg["dataset.kind"] not in ("moons", "blobs", "spirals", "csv"):
        problems.append(f"dataset.kind: unknown kind {cfg['dataset.kind']!r}")
    if cfg["dataset.kind"] == "csv" and not cfg["dataset.path"]:
        problems.append("dataset.path: required when dataset.kind = csv")
    if cfg["dataset.kind"] == "csv" and not Path(cfg["dataset.path"]).is_file():
        problems.append(f"dataset.path: no such file {cfg['dataset.path']!r}")
    if not cfg["run.seeds"]:
        problems.append("run.seeds: at least one seed required")
    try:
        _prune_run_config(cfg, seed=0)
    except (ValueError, TypeError) as exc:
        problems.append(f"prune.*: {exc}")
    if problems:
        raise ConfigError(problems)
    return cfg


def _prune_run_config(cfg: dict, seed: int) -> PruneRunConfig:
    return PruneRunConfig(
        schedule=cfg["prune.schedule"],
        n_candidates=cfg["prune.n_candidates"],
        sampling=SamplingConfig(
            sampling_ratio=cfg["prune.sampling_ratio"],
            sharpening_power=cfg["prune.sharpening_power"],
            range_multiplier=cfg["prune.range_multiplier"],
            schedule_kind=cfg["prune.randomness_schedule"],
        ),
        optimizer=cfg["prune.optimizer"],
        base_lr=cfg["prune.base_lr"],
        emep_lr_multiplier=cfg["prune.emep_lr_multiplier"],
        batch_size=cfg["prune.batch_size"],
        finetune_epochs_max=cfg["prune.finetune_epochs_max"],
        convergence_patience=cfg["prune.convergence_patience"],
        kd=KDConfig(
            enabled=cfg["kd.enabled"],
            hidden_weight=cfg["kd.hidden_weight"],
            output_weight=cfg["kd.output_weight"],
        ),
        seed=seed,
    )


def _build_data(cfg: dict, seed: int):
    if cfg["dataset.kind"] == "csv":
        data = load_csv(cfg["dataset.path"], cfg["dataset.label_column"])
    else:
        data = generate_synthetic(
            cfg["dataset.kind"],
            cfg["dataset.n"],
            noise=cfg["dataset.noise"],
            seed=seeding.substream_seed(seed, seeding.TAG_DATA),
            n_classes=cfg["dataset.classes"],
        )
    train, val = stratified_split(
        data,
        cfg["dataset.val_fraction"],
        seeding.substream_seed(seed, seeding.TAG_SPLIT),
    )
    train, val, _, _ = standardize_pair(train, val)
    return train, val


def _fmt(value) -> str:
    if isinstance(value, float) or isinstance(value, np.floating):
        return repr(float(value))
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]):
    lines = [SCHEMA_LINE, ",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def magnitude_histogram(weights: np.ndarray, n_keep: int, bins: int):
    """Histogram of |w| plus the pruning boundary and near-boundary share.

    The boundary tau is the n_keep-th largest magnitude; the share is
    the fraction of all weights with magnitude in [2*tau/3, 4*tau/3].
    """
    mag = np.abs(np.asarray(weights, dtype=np.float64).ravel())
    if not 0 < n_keep <= mag.size:
        raise ValueError(f"n_keep must be in [1, {mag.size}], got {n_keep}")
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    tau = float(np.sort(mag)[::-1][n_keep - 1])
    counts, edges = np.histogram(mag, bins=bins, range=(0.0, float(mag.max())))
    near = float(
        np.count_nonzero((mag >= 2.0 * tau / 3.0) & (mag <= 4.0 * tau / 3.0))
        / mag.size
    )
    return counts, edges, tau, near


def cmd_run(args, overrides: dict[str, str]) -> int:
    config_path = Path(args.config)
    if not config_path.is_file():
        print(f"error: config file not found: {config_path}", file=sys.stderr)
        return 2
    try:
        raw = parse_config_text(
            config_path.read_text(encoding="utf-8"), str(config_path)
        )
        for key, value in overrides.items():
            if key not in DEFAULTS:
                raise ConfigError([f"override: unknown key {key!r}"])
            raw[key] = value
        if args.seed is not None:
            raw["run.seeds"] = str(args.seed)
        if args.out is not None:
            raw["run.out"] = args.out
        if args.dump_weights:
            raw["run.dump_weights"] = "true"
        cfg = resolve_config(raw)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2

    out = Path(cfg["run.out"])
    out.mkdir(parents=True, exist_ok=True)
    dump_dir = out / "dumps"
    if cfg["run.dump_weights"]:
        dump_dir.mkdir(exist_ok=True)

    stage_rows: list[list] = []
    cand_rows: list[list] = []
    per_seed: dict[str, dict] = {}
    failed = False
    failure_msg = ""

    for seed in cfg["run.seeds"]:
        train, val = _build_data(cfg, seed)
        sizes = [train.n_features, *cfg["network.hidden"], train.class_count]
        net = MaskedNetwork.dense(
            init_network(
                sizes,
                activation=cfg["network.activation"],
                seed=seeding.substream_seed(seed, seeding.TAG_INIT),
            )
        )
        run_cfg = _prune_run_config(cfg, seed)

        def dump_hook(stage, net, ctx, seed=seed):
            arrays = {
                f"w{li}": layer.weights.copy()
                for li, layer in enumerate(net.network.layers)
            }
            arrays["ks"] = np.asarray(ctx.keeps, dtype=np.int64)
            np.savez(dump_dir / f"stage{stage}_seed{seed}.npz", **arrays)

        hook = dump_hook if cfg["run.dump_weights"] else None
        try:
            _, reports = imp_run(
                net, run_cfg, train, val, n_jobs=args.parallel,
                stage_start_hook=hook,
            )
        except PruneRunError as exc:
            reports = exc.reports
            failed = True
            failure_msg = str(exc)

        seed_stages = []
        for rep in reports:
            stage_rows.append([
                seed, rep.stage, rep.sparsity, rep.winner_origin,
                rep.winner_ir_mean, rep.val_accuracy, rep.val_loss,
                rep.epochs, rep.wall_ms,
            ])
            for cand in rep.candidates:
                cand_rows.append([
                    seed, rep.stage, cand.id, cand.origin, cand.ir_mean,
                    cand.emep_score,
                ])
            seed_stages.append({
                "stage": rep.stage,
                "sparsity": rep.sparsity,
                "winner_origin": rep.winner_origin,
                "winner_ir_mean": rep.winner_ir_mean,
                "val_accuracy": rep.val_accuracy,
                "val_loss": rep.val_loss,
                "epochs": rep.epochs,
            })
        if reports:
            per_seed[str(seed)] = {
                "final_val_accuracy": reports[-1].val_accuracy,
                "final_val_loss": reports[-1].val_loss,
                "stages": seed_stages,
            }
        if failed:
            break

    _write_csv(out / "stages.csv", STAGES_HEADER, stage_rows)
    _write_csv(out / "candidates.csv", CANDIDATES_HEADER, cand_rows)
    summary = {
        "config": {k: v for k, v in sorted(cfg.items()) if k != "run.out"},
        "seeds": per_seed,
    }
    if per_seed:
        summary["mean_final_val_accuracy"] = float(
            np.mean([s["final_val_accuracy"] for s in per_seed.values()])
        )
        summary["mean_final_val_loss"] = float(
            np.mean([s["final_val_loss"] for s in per_seed.values()])
        )
    if failed:
        summary["partial"] = True
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if failed:
        print(f"error: {failure_msg}", file=sys.stderr)
        print(f"partial outputs written to {out}", file=sys.stderr)
        return 1
    print(f"wrote {out / 'stages.csv'}, {out / 'candidates.csv'}, "
          f"{out / 'summary.json'}")
    return 0


def _load_summary(run_dir: Path) -> dict | None:
    path = run_dir / "summary.json"
    if not path.is_file():
        return None
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return None


def cmd_compare(args) -> int:
    dir_a, dir_b = Path(args.run_dir_a), Path(args.run_dir_b)
    summary_a = _load_summary(dir_a)
    summary_b = _load_summary(dir_b)
    if summary_a is None or summary_b is None:
        missing = dir_a if summary_a is None else dir_b
        print(f"error: no readable summary.json in {missing}", file=sys.stderr)
        return 2
    sched_a = summary_a.get("config", {}).get("prune.schedule")
    sched_b = summary_b.get("config", {}).get("prune.schedule")
    if sched_a != sched_b:
        print(f"warning: schedules differ ({sched_a} vs {sched_b}); "
              "comparing anyway")
    seeds = sorted(
        set(summary_a.get("seeds", {})) & set(summary_b.get("seeds", {})),
        key=int,
    )
    if not seeds:
        print("error: no common seeds between the two runs", file=sys.stderr)
        return 2
    print(f"{'seed':>6}  {'acc_a':>10}  {'acc_b':>10}  {'diff':>10}")
    accs_a, accs_b = [], []
    for seed in seeds:
        a = summary_a["seeds"][seed]["final_val_accuracy"]
        b = summary_b["seeds"][seed]["final_val_accuracy"]
        accs_a.append(a)
        accs_b.append(b)
        print(f"{seed:>6}  {a:>10.4f}  {b:>10.4f}  {a - b:>+10.4f}")
    mean_a, mean_b = float(np.mean(accs_a)), float(np.mean(accs_b))
    print(f"{'mean':>6}  {mean_a:>10.4f}  {mean_b:>10.4f}  "
          f"{mean_a - mean_b:>+10.4f}")
    return 0


def cmd_hist(args) -> int:
    run_dir = Path(args.run_dir)
    dump_dir = run_dir / "dumps"
    dumps = sorted(dump_dir.glob(f"stage{args.stage}_seed*.npz"))
    if not dumps:
        print(
            f"error: no weight dumps for stage {args.stage} in {dump_dir} "
            "(run with --dump-weights)",
            file=sys.stderr,
        )
        return 2
    rows: list[list] = []
    for dump in dumps:
        seed = int(dump.stem.split("_seed")[1])
        with np.load(dump) as payload:
            ks = payload["ks"]
            layer_ids = sorted(
                int(name[1:]) for name in payload.files if name.startswith("w")
            )
            for li in layer_ids:
                counts, edges, tau, near = magnitude_histogram(
                    payload[f"w{li}"], int(ks[li]), args.bins
                )
                for bi, count in enumerate(counts):
                    rows.append([
                        seed, li, bi, edges[bi], edges[bi + 1], int(count),
                        tau, near,
                    ])
                print(
                    f"seed {seed} layer {li}: boundary {tau:.6g}, "
                    f"near-boundary fraction {near:.4f}"
                )
    out_path = run_dir / f"hist_stage{args.stage}.csv"
    _write_csv(out_path, HIST_HEADER, rows)
    print(f"wrote {out_path}")
    return 0


def _split_overrides(rest: list[str]) -> dict[str, str]:
    """Turn leftover ['--a.b', 'v', ...] pairs into an override dict."""
    overrides: dict[str, str] = {}
    i = 0
    while i < len(rest):
        token = rest[i]
        if not token.startswith("--") or i + 1 >= len(rest):
            raise ConfigError([f"override: expected '--key value', got {token!r}"])
        overrides[token[2:]] = rest[i + 1]
        i += 2
    return overrides


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="randprune",
        description="Randomized pruning-mask search on small dense networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment config")
    run_p.add_argument("--config", required=True, help="path to the config file")
    run_p.add_argument("--seed", type=int, default=None,
                       help="run a single seed, overriding run.seeds")
    run_p.add_argument("--out", default=None, help="output directory")
    run_p.add_argument("--parallel", type=int, default=1,
                       help="threads for candidate scoring")
    run_p.add_argument("--dump-weights", action="store_true",
                       help="dump per-stage weights for the hist command")

    cmp_p = sub.add_parser("compare", help="compare two run directories")
    cmp_p.add_argument("run_dir_a")
    cmp_p.add_argument("run_dir_b")

    hist_p = sub.add_parser("hist", help="weight-magnitude histogram of a stage")
    hist_p.add_argument("run_dir")
    hist_p.add_argument("--stage", type=int, required=True)
    hist_p.add_argument("--bins", type=int, default=30)

    args, rest = parser.parse_known_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args, _split_overrides(rest))
        if rest:
            parser.error(f"unrecognized arguments: {' '.join(rest)}")
        if args.command == "compare":
            return cmd_compare(args)
        return cmd_hist(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
