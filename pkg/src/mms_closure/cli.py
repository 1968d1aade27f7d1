"""Command line entry point: ``mms-closure {mms-check,solve,train,eval,plot}``."""

from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import verify
from .config import AppConfig, ConfigError, parse_config
from .evaluation import MODES, EvalRun, evaluate, stats_reduction, write_outputs
from .grid import write_field_csv
from .mms import forcing_field, sample_spec
from .policy import CheckpointError, load_checkpoint
from .ppo import train
from .solvers import BlowUpError, make_pde

log = logging.getLogger("mms_closure")

KINDS = ("burgers1d", "burgers2d", "advection2d")
MODE_ALIASES = {"in": MODES[0], "ood": MODES[1], "id": MODES[0]}


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def write_manifest(out: Path, command: str, cfg: AppConfig, extra: dict | None = None) -> Path:
    """``run.json``: config copy, seed and library versions. No timestamps, so reruns match byte for byte."""
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "seed": cfg.run.seed,
        "config": cfg.to_dict(),
        "versions": {"python": platform.python_version(), "numpy": np.__version__, "mms_closure": _version()},
    }
    if extra:
        manifest.update(extra)
    path = out / "run.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _load(args, **overrides) -> AppConfig:
    pairs = {
        "run.seed": getattr(args, "seed", None),
        "run.output_dir": getattr(args, "out", None),
        "pde.kind": getattr(args, "kind", None),
    }
    pairs.update(overrides)
    return parse_config(args.config, pairs)


def cmd_mms_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for kind in KINDS:
        residual = verify.max_forcing_residual(kind, rng, n_cases=args.cases)
        worst = max(worst, residual)
        status = "ok" if residual < verify.TOLERANCE else "FAIL"
        print(f"{kind:12s} max residual {residual:.3e}  {status}")
    return 0 if worst < verify.TOLERANCE else 1


def cmd_solve(args) -> int:
    cfg = _load(args)
    ec = cfg.episode_config()
    grid = ec.coarse if args.grid == "coarse" else ec.fine
    times = tuple(args.times) if args.times else cfg.eval.snapshot_times
    steps = {int(round(t / grid.dt)): t for t in times}
    if min(steps) < 0:
        print("error: snapshot times must be >= 0", file=sys.stderr)
        return 2
    spec = sample_spec(ec.kind, np.random.default_rng(cfg.run.seed))
    pde = make_pde(ec.kind, ec.nu, spec)
    state = spec.solution_field(grid, 0.0)
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def dump(n):
        for k in range(state.shape[0]):
            suffix = "" if state.shape[0] == 1 else f"_{'uv'[k]}"
            path = out / f"solve_t{steps[n]:g}{suffix}.csv"
            write_field_csv(path, state[k])
            written.append(path.name)

    if 0 in steps:
        dump(0)
    for n in range(1, max(steps) + 1):
        forcing = None if args.homogeneous else forcing_field(spec, grid, (n - 1) * grid.dt, ec.nu)
        try:
            state = pde.step(state, grid, forcing)
        except BlowUpError:
            print(f"error: solution blew up at step {n}", file=sys.stderr)
            return 1
        if n in steps:
            dump(n)
    write_manifest(out, "solve", cfg, {"grid": args.grid, "homogeneous": args.homogeneous, "files": written})
    for name in written:
        print(out / name)
    return 0


def cmd_train(args) -> int:
    cfg = _load(
        args,
        **{
            "rl.epochs": args.epochs,
            "rl.transitions_per_epoch": args.transitions,
            "rl.validation_episodes": args.validation_episodes,
            "run.deterministic": True if args.deterministic else None,
        },
    )
    out = cfg.output_dir()
    write_manifest(out, "train", cfg)
    _, training_log = train(cfg.rl, cfg.episode_config(), cfg.run.seed, out, cfg.run.checkpoint_every)
    from .plots import plot_training

    plot_training(out / "training_log.csv", out / "training.svg")
    print(f"best epoch {training_log.best_epoch}, validation {training_log.best_score:.4e}, output {out}")
    return 0


def cmd_eval(args) -> int:
    mode = MODE_ALIASES.get(args.mode, args.mode) if args.mode else None
    try:
        params = load_checkpoint(args.checkpoint)
    except (OSError, CheckpointError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    kind = args.kind or params.kind
    if kind != params.kind:
        print(f"error: checkpoint is for {params.kind}, not {kind}", file=sys.stderr)
        return 1
    cfg = _load(args, **{"pde.kind": kind, "eval.mode": mode, "eval.samples": args.samples})
    ec = cfg.episode_config()
    run = EvalRun(
        kind=kind,
        mode=cfg.eval.mode,
        samples=cfg.eval.samples,
        checkpoint=str(args.checkpoint),
        seed=cfg.run.seed,
        output_dir=str(cfg.output_dir()),
        snapshot_times=cfg.eval.snapshot_times,
    )
    stats = evaluate(run, params, ec)
    out = cfg.output_dir()
    write_outputs(stats, out, ec)
    per_step, cumulative = stats_reduction(stats)
    write_manifest(out, "eval", cfg, {"checkpoint": str(args.checkpoint), "excluded_samples": stats.n_excluded})
    print(
        f"{run.mode}: {stats.n_samples} samples ({stats.n_excluded} excluded), "
        f"final reduction {per_step[-1]:.3f}, final cumulative reduction {cumulative[-1]:.3f}"
    )
    return 0


def cmd_plot(args) -> int:
    from .plots import plot_curves, plot_training

    d = Path(args.dir)
    written = plot_curves(d)
    if (d / "training_log.csv").exists():
        written.append(plot_training(d / "training_log.csv", d / "training.svg"))
    if not written:
        print(f"error: no mse.csv, cumulative.csv or training_log.csv in {d}", file=sys.stderr)
        return 1
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mms-closure", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def common(p, kind=True):
        p.add_argument("--config", type=Path, help="INI configuration file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory (default: $MMS_CLOSURE_OUTPUT or ./runs)")
        if kind:
            p.add_argument("--kind", choices=KINDS)

    p = sub.add_parser("mms-check", help="compare closed-form forcing with a finite-difference residual")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=200, help="random (spec, point, time) tuples per family")
    p.set_defaults(func=cmd_mms_check)

    p = sub.add_parser("solve", help="run one trajectory and write snapshot CSVs")
    common(p)
    p.add_argument("--grid", choices=("coarse", "fine"), default="coarse")
    p.add_argument("--homogeneous", action="store_true", help="drop the manufactured forcing")
    p.add_argument("--times", type=float, nargs="+", help="snapshot times")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("train", help="train a closure policy with PPO")
    common(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--transitions", type=int, help="transitions per epoch")
    p.add_argument("--validation-episodes", type=int)
    p.add_argument("--deterministic", action="store_true", help="single-threaded, bitwise reproducible")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint against the coarse baseline")
    common(p)
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--mode", choices=MODES + tuple(MODE_ALIASES))
    p.add_argument("--samples", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render SVGs from existing CSV outputs")
    p.add_argument("dir", type=Path)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
