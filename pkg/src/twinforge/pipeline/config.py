"""Experiment configuration read from an INI file.

Example::

    [experiment]
    workspace = work
    seed = 0
    jobs = 1

    [bank]
    aprbs = 50
    sinaprbs = 25
    multisine = 20
    schroeder = 5

    [train]
    epochs = 6000
    lr = 0.01

Every key is optional. Sections ``[grid]`` and ``[constants]`` override
CuboidGrid and MaterialConstants fields by name. The environment variable
``TWINFORGE_WORKSPACE`` replaces the workspace path.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from ..errors import ConfigError
from ..fom import CuboidGrid, MaterialConstants
from ..rom import TrainConfig

ENV_WORKSPACE = "TWINFORGE_WORKSPACE"

# Training defaults of the experiment; faster than the library default
# (constant 1e-3) and reaching sub-Kelvin training error on one signal.
PIPELINE_TRAIN = TrainConfig(epochs=6000, lr=1e-2, lr_schedule="cosine", lr_final=1e-4)


@dataclass(frozen=True)
class BankSpec:
    aprbs: int = 50
    sinaprbs: int = 25
    multisine: int = 20
    schroeder: int = 5
    step: int = 1
    sine: int = 1
    horizon: float = 1400.0

    @property
    def total(self):
        return self.aprbs + self.sinaprbs + self.multisine + self.schroeder + self.step + self.sine


@dataclass(frozen=True)
class EvalSpec:
    test_size: int = 15
    n_bins: int = 6
    alpha: float = 0.05
    best_k: int = 5
    sin_k: int = 10
    max_tries: int = 2000
    extrapolation: bool = True
    min_correlation_roms: int = 30


@dataclass(frozen=True)
class ExperimentConfig:
    workspace: Path = Path("twinforge-work")
    seed: int = 0
    jobs: int = 1
    bank: BankSpec = BankSpec()
    evaluation: EvalSpec = EvalSpec()
    train: TrainConfig = PIPELINE_TRAIN
    grid: CuboidGrid = CuboidGrid()
    constants: MaterialConstants = MaterialConstants()
    source: str = field(default="", compare=False)

    def __post_init__(self):
        ev, bank = self.evaluation, self.bank
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if ev.test_size < ev.n_bins:
            raise ConfigError("test_size must be at least n_bins")
        for kind in ("aprbs", "sinaprbs", "multisine"):
            n = getattr(bank, kind)
            if n and n < ev.test_size + ev.best_k:
                raise ConfigError(f"bank.{kind} = {n} must be 0 or >= test_size + best_k "
                                  f"= {ev.test_size + ev.best_k}")
        if bank.aprbs and ev.sin_k > bank.aprbs - ev.test_size:
            raise ConfigError("sin_k exceeds the number of APRBS training signals")

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def with_workspace(self, path):
        return replace(self, workspace=Path(path))

    def to_dict(self):
        return {
            "workspace": str(self.workspace), "seed": self.seed, "jobs": self.jobs,
            "bank": asdict(self.bank), "evaluation": asdict(self.evaluation),
            "train": self.train.to_dict(), "grid": self.grid.to_dict(),
            "constants": self.constants.to_dict(),
        }


def _convert(kind, raw, key):
    try:
        if kind is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if kind is tuple:
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        return kind(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def _section(parser, name, cls, base):
    if not parser.has_section(name):
        return base
    types = {f.name: type(getattr(base, f.name)) for f in fields(cls)}
    values = {}
    for key, raw in parser[name].items():
        if key not in types:
            raise ConfigError(f"unknown key [{name}] {key}")
        values[key] = _convert(types[key], raw, f"[{name}] {key}")
    try:
        return replace(base, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{name}]: {exc}") from exc


def load_config(path=None, env=None) -> ExperimentConfig:
    """Build an ExperimentConfig from an INI file (or defaults when ``path`` is None)."""
    env = os.environ if env is None else env
    parser = configparser.ConfigParser()
    parser.optionxform = str
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser.read(path)
        known = {"experiment", "bank", "evaluation", "train", "grid", "constants"}
        extra = set(parser.sections()) - known
        if extra:
            raise ConfigError(f"unknown config sections: {sorted(extra)}")
    exp = parser["experiment"] if parser.has_section("experiment") else {}
    for key in exp:
        if key not in ("workspace", "seed", "jobs"):
            raise ConfigError(f"unknown key [experiment] {key}")
    workspace = Path(exp.get("workspace", "twinforge-work"))
    if path is not None and not workspace.is_absolute():
        workspace = path.parent / workspace
    if env.get(ENV_WORKSPACE):
        workspace = Path(env[ENV_WORKSPACE])
    try:
        return ExperimentConfig(
            workspace=workspace,
            seed=_convert(int, exp.get("seed", "0"), "[experiment] seed"),
            jobs=_convert(int, exp.get("jobs", "1"), "[experiment] jobs"),
            bank=_section(parser, "bank", BankSpec, BankSpec()),
            evaluation=_section(parser, "evaluation", EvalSpec, EvalSpec()),
            train=_section(parser, "train", TrainConfig, PIPELINE_TRAIN),
            grid=_section(parser, "grid", CuboidGrid, CuboidGrid()),
            constants=_section(parser, "constants", MaterialConstants, MaterialConstants()),
            source=str(path or ""),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
