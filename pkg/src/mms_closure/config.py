"""Run configuration: an INI file with [run], [pde], [env], [rl], [eval] sections.

Every key is optional. Grid, viscosity and threshold defaults depend on
``[pde] kind``; RL defaults are the published training settings.

Example::

    [pde]
    kind = burgers1d

    [rl]
    epochs = 100
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

from .env import EpisodeConfig, default_config
from .evaluation import MODES, SNAPSHOT_TIMES
from .grid import Grid1D, Grid2D
from .ppo import PpoConfig

OUTPUT_ENV_VAR = "MMS_CLOSURE_OUTPUT"


class ConfigError(ValueError):
    pass


@dataclass
class RunSection:
    seed: int = 0
    output_dir: str = ""
    deterministic: bool = True
    checkpoint_every: int = 1


@dataclass
class PdeSection:
    kind: str = "burgers1d"
    nu: float | None = None
    coarse_n: int | None = None
    fine_n: int | None = None
    coarse_dt: float | None = None
    fine_dt: float | None = None


@dataclass
class EnvSection:
    max_steps: int = 200
    mae_threshold: float | None = None


@dataclass
class EvalSection:
    samples: int = 30
    mode: str = "in_distribution"
    snapshot_times: tuple = SNAPSHOT_TIMES


@dataclass
class AppConfig:
    run: RunSection = field(default_factory=RunSection)
    pde: PdeSection = field(default_factory=PdeSection)
    env: EnvSection = field(default_factory=EnvSection)
    rl: PpoConfig = field(default_factory=PpoConfig)
    eval: EvalSection = field(default_factory=EvalSection)

    def episode_config(self) -> EpisodeConfig:
        base = default_config(self.pde.kind)
        p = self.pde
        if base.ndim == 1:
            coarse = Grid1D(p.coarse_n or base.coarse.n_points, p.coarse_dt or base.coarse.dt)
            fine = Grid1D(p.fine_n or base.fine.n_points, p.fine_dt or base.fine.dt)
        else:
            cn, fn = p.coarse_n or base.coarse.nx, p.fine_n or base.fine.nx
            coarse = Grid2D(cn, cn, p.coarse_dt or base.coarse.dt)
            fine = Grid2D(fn, fn, p.fine_dt or base.fine.dt)
        return EpisodeConfig(
            kind=p.kind,
            coarse=coarse,
            fine=fine,
            nu=base.nu if p.nu is None else p.nu,
            mae_threshold=self.env.mae_threshold or base.mae_threshold,
            max_steps=self.env.max_steps,
        )

    def output_dir(self) -> Path:
        return Path(self.run.output_dir or os.environ.get(OUTPUT_ENV_VAR) or "runs")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


SECTIONS = {"run": RunSection, "pde": PdeSection, "env": EnvSection, "rl": PpoConfig, "eval": EvalSection}


def _convert(section: str, key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            value = raw.strip().lower()
            if value in ("1", "true", "yes", "on"):
                return True
            if value in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, tuple):
            return tuple(float(v) for v in raw.replace(",", " ").split())
        if isinstance(default, str):
            return raw.strip()
        if default is None and key == "kind":
            return raw.strip()
        if default is None and key in ("coarse_n", "fine_n"):
            return int(raw)
        return float(raw)
    except ValueError as err:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from err


def _validate(cfg: AppConfig) -> None:
    p, e = cfg.pde, cfg.env
    if p.kind not in ("burgers1d", "burgers2d", "advection2d"):
        raise ConfigError(f"[pde] kind: unknown PDE kind {p.kind!r}")
    for key in ("nu", "coarse_dt", "fine_dt"):
        value = getattr(p, key)
        if value is not None and not value > 0:
            raise ConfigError(f"[pde] {key}: must be positive, got {value}")
    for key in ("coarse_n", "fine_n"):
        value = getattr(p, key)
        if value is not None and value < 4:
            raise ConfigError(f"[pde] {key}: must be >= 4, got {value}")
    if e.max_steps < 1:
        raise ConfigError(f"[env] max_steps: must be >= 1, got {e.max_steps}")
    if e.mae_threshold is not None and not e.mae_threshold > 0:
        raise ConfigError(f"[env] mae_threshold: must be positive, got {e.mae_threshold}")
    if cfg.eval.samples < 1:
        raise ConfigError(f"[eval] samples: must be >= 1, got {cfg.eval.samples}")
    if cfg.eval.mode not in MODES:
        raise ConfigError(f"[eval] mode: must be one of {MODES}")
    if cfg.run.checkpoint_every < 1:
        raise ConfigError("[run] checkpoint_every: must be >= 1")
    try:
        cfg.episode_config()
    except ValueError as err:
        raise ConfigError(f"[pde]/[env]: {err}") from err


def parse_config(path: str | Path | None = None, overrides: dict | None = None) -> AppConfig:
    """Read ``path`` (may be None or empty), apply ``{"section.key": value}`` overrides, validate."""
    parser = configparser.ConfigParser(interpolation=None)
    if path is not None:
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as err:
            raise ConfigError(f"{path}: {err}") from err

    values: dict[str, dict] = {name: {} for name in SECTIONS}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        known = {f.name: f for f in dataclasses.fields(SECTIONS[section])}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"[{section}] {key}: unknown key")
            values[section][key] = _convert(section, key, raw, known[key].default)

    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, key = dotted.split(".", 1)
        known = {f.name for f in dataclasses.fields(SECTIONS[section])}
        if key not in known:
            raise ConfigError(f"[{section}] {key}: unknown key")
        values[section][key] = value

    try:
        sections = {name: cls(**values[name]) for name, cls in SECTIONS.items()}
    except ValueError as err:
        raise ConfigError(f"[rl] {err}") from err
    cfg = AppConfig(**sections)
    _validate(cfg)
    return cfg
