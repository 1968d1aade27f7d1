"""Median / interquartile evaluation of coarse runs with and without closure.

In-distribution runs use fresh forced problems referenced to the analytic
solution. Out-of-distribution runs drop the forcing, start from the sampled
manufactured solution at t=0 and are referenced to a subsampled fine solve.
Quantiles use linear interpolation between order statistics.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import EpisodeConfig, fine_references
from .mms import sample_spec
from .policy import NetworkParams
from .rollout import rollout

log = logging.getLogger(__name__)

IN_DISTRIBUTION = "in_distribution"
OUT_OF_DISTRIBUTION = "out_of_distribution"
MODES = (IN_DISTRIBUTION, OUT_OF_DISTRIBUTION)
SNAPSHOT_TIMES = (0.0, 0.25, 0.5, 0.75, 1.0)
REDUCTION_FLOOR = 1e-14
TEST_STREAM = 0x7E57

CURVE_COLUMNS = ["step", "t", "cgs_q25", "cgs_median", "cgs_q75", "rl_q25", "rl_median", "rl_q75"]


@dataclass
class EvalRun:
    kind: str
    mode: str = IN_DISTRIBUTION
    samples: int = 30
    checkpoint: str | None = None
    seed: int = 0
    output_dir: str = "eval_out"
    snapshot_times: tuple = SNAPSHOT_TIMES

    def __post_init__(self):
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")


@dataclass
class Band:
    q25: np.ndarray
    median: np.ndarray
    q75: np.ndarray

    @classmethod
    def of(cls, curves: np.ndarray) -> Band:
        if len(curves) == 0:
            nan = np.full(curves.shape[1], np.nan)
            return cls(nan, nan.copy(), nan.copy())
        q25, med, q75 = np.quantile(curves, [0.25, 0.5, 0.75], axis=0, method="linear")
        return cls(q25, med, q75)


@dataclass
class CurveStats:
    steps: np.ndarray
    t: np.ndarray
    cgs_mse: Band
    rl_mse: Band
    cgs_cumulative: Band
    rl_cumulative: Band
    n_samples: int
    n_excluded: int = 0
    raw_cgs: np.ndarray | None = None
    raw_rl: np.ndarray | None = None
    snapshots: dict = field(default_factory=dict)  # t -> {"reference", "cgs", "rl"} of sample 0


def held_out_specs(kind: str, n: int, seed: int):
    """Problems drawn from a stream disjoint from training and validation."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, TEST_STREAM]))
    return [sample_spec(kind, rng) for _ in range(n)]


def snapshot_step(t: float, dt: float) -> int:
    return int(round(t / dt))


def _evaluate(params, config: EpisodeConfig, specs, forced: bool, references, snapshot_times) -> CurveStats:
    steps = [snapshot_step(t, config.coarse.dt) for t in snapshot_times]
    steps = [s for s in steps if s <= config.max_steps]
    base = rollout(None, config, specs, forced, references, steps)
    closed = rollout(params, config, specs, forced, references, steps)
    keep = ~(base.blew_up | closed.blew_up)
    n_excluded = int(np.sum(~keep))
    if n_excluded:
        log.warning(
            "%d of %d samples blew up (coarse: %d, closure: %d) and are excluded",
            n_excluded, len(specs), int(base.blew_up.sum()), int(closed.blew_up.sum()),
        )
    cgs, rl = base.mse[keep], closed.mse[keep]
    n = np.arange(config.max_steps + 1)
    snaps = {}
    if keep.size and keep[0]:
        for t, s in zip(snapshot_times, steps):
            snaps[t] = {
                "reference": base.references[s][0],
                "cgs": base.snapshots[s][0],
                "rl": closed.snapshots[s][0],
            }
    return CurveStats(
        steps=n,
        t=n * config.coarse.dt,
        cgs_mse=Band.of(cgs),
        rl_mse=Band.of(rl),
        cgs_cumulative=Band.of(np.cumsum(cgs, axis=1)),
        rl_cumulative=Band.of(np.cumsum(rl, axis=1)),
        n_samples=int(keep.sum()),
        n_excluded=n_excluded,
        raw_cgs=cgs,
        raw_rl=rl,
        snapshots=snaps,
    )


def eval_in_distribution(
    params: NetworkParams | None, config: EpisodeConfig, samples: int = 30, seed: int = 0, snapshot_times=SNAPSHOT_TIMES
) -> CurveStats:
    specs = held_out_specs(config.kind, samples, seed)
    return _evaluate(params, config, specs, True, None, snapshot_times)


def eval_out_of_distribution(
    params: NetworkParams | None, config: EpisodeConfig, samples: int = 30, seed: int = 0, snapshot_times=SNAPSHOT_TIMES
) -> CurveStats:
    specs = held_out_specs(config.kind, samples, seed)
    refs = fine_references(config, specs)
    return _evaluate(params, config, specs, False, refs, snapshot_times)


def evaluate(run: EvalRun, params: NetworkParams | None, config: EpisodeConfig) -> CurveStats:
    fn = eval_in_distribution if run.mode == IN_DISTRIBUTION else eval_out_of_distribution
    return fn(params, config, run.samples, run.seed, run.snapshot_times)


def error_reduction(cgs: np.ndarray, rl: np.ndarray) -> np.ndarray:
    """1 - rl / cgs per timestep; 0 where the baseline error is below 1e-14."""
    cgs = np.asarray(cgs, dtype=np.float64)
    rl = np.asarray(rl, dtype=np.float64)
    if cgs.shape != rl.shape:
        raise ValueError("curves are not aligned")
    out = np.zeros_like(cgs)
    ok = cgs >= REDUCTION_FLOOR
    out[ok] = 1.0 - rl[ok] / cgs[ok]
    return out


def stats_reduction(stats: CurveStats) -> tuple[np.ndarray, np.ndarray]:
    """Reduction of the median per-step MSE and of the median cumulative MSE."""
    return (
        error_reduction(stats.cgs_mse.median, stats.rl_mse.median),
        error_reduction(stats.cgs_cumulative.median, stats.rl_cumulative.median),
    )


def _write_curve(path: Path, stats: CurveStats, cgs: Band, rl: Band) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for i, n in enumerate(stats.steps):
            writer.writerow(
                [int(n), repr(float(stats.t[i]))]
                + [repr(float(b[i])) for b in (cgs.q25, cgs.median, cgs.q75, rl.q25, rl.median, rl.q75)]
            )


def read_curve_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in CURVE_COLUMNS}


def _snapshot_columns(field_: np.ndarray, name: str) -> dict[str, np.ndarray]:
    if field_.shape[0] == 1:
        return {name: field_[0].ravel()}
    return {f"{name}_{c}": field_[k].ravel() for k, c in zip(range(field_.shape[0]), "uv")}


def write_outputs(stats: CurveStats, output_dir: str | Path, config: EpisodeConfig) -> list[Path]:
    """CSV curves, reduction series, SVG plots and sample-0 field snapshots."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "mse.csv", out / "cumulative.csv", out / "reduction.csv"]
    _write_curve(written[0], stats, stats.cgs_mse, stats.rl_mse)
    _write_curve(written[1], stats, stats.cgs_cumulative, stats.rl_cumulative)
    per_step, cumulative = stats_reduction(stats)
    with open(written[2], "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "t", "reduction", "cumulative_reduction"])
        for i, n in enumerate(stats.steps):
            writer.writerow([int(n), repr(float(stats.t[i])), repr(float(per_step[i])), repr(float(cumulative[i]))])

    coords = config.coarse.coords()
    for t, snap in stats.snapshots.items():
        cols = {"x": coords[0].ravel()}
        if len(coords) == 2:
            cols["y"] = coords[1].ravel()
        for name in ("reference", "cgs", "rl"):
            cols.update(_snapshot_columns(snap[name], name))
        path = out / f"snapshot_t{t:g}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(cols))
            for row in zip(*cols.values()):
                writer.writerow([repr(float(v)) for v in row])
        written.append(path)

    from .plots import plot_curves

    written += plot_curves(out)
    return written
