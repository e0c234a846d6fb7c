"""Workspace layout and the content-addressed simulation cache."""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from ..errors import MissingArtifactError
from ..fom import CuboidGrid, MaterialConstants, SimResult
from ..fom.solver import SOLVER_VERSION
from ..signals import Signal

SUBDIRS = ("signals", "simresults", "models", "eval", "report")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def read_json(path):
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError(f"missing artifact: {path}")
    return json.loads(path.read_text())


def sim_key(values, grid: CuboidGrid, constants: MaterialConstants) -> str:
    """SHA-256 over the excitation samples, grid, constants and solver version."""
    doc = {
        "values": [repr(float(v)) for v in np.asarray(values, dtype=float)],
        "grid": grid.to_dict(),
        "constants": {k: repr(float(v)) for k, v in constants.to_dict().items()},
        "solver": SOLVER_VERSION,
    }
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


class Workspace:
    def __init__(self, root):
        self.root = Path(root)

    def create(self):
        for sub in SUBDIRS:
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        return self

    def __getattr__(self, name):
        if name in SUBDIRS:
            return self.root / name
        raise AttributeError(name)

    @property
    def log_path(self):
        return self.root / "pipeline.log"

    def logger(self) -> logging.Logger:
        """File logger; timestamps live only here, never in CSV artifacts."""
        log = logging.getLogger(f"twinforge.{self.root.resolve()}")
        if not log.handlers:
            self.root.mkdir(parents=True, exist_ok=True)
            handler = logging.FileHandler(self.log_path)
            handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
            log.addHandler(handler)
            log.setLevel(logging.INFO)
        return log

    # signals
    def signal_path(self, sid):
        return self.signals / f"{sid}.csv"

    def signal_ids(self):
        return sorted(p.stem for p in self.signals.glob("*.csv") if p.with_suffix(".json").is_file())

    def load_signal(self, sid) -> Signal:
        path = self.signal_path(sid)
        if not path.is_file():
            raise MissingArtifactError(f"signal {sid} not found in {self.signals}; run synth first")
        return Signal.from_files(path)

    # simulation cache
    @property
    def sim_index_path(self):
        return self.simresults / "index.json"

    def sim_index(self) -> dict:
        path = self.sim_index_path
        return json.loads(path.read_text()) if path.is_file() else {}

    def write_sim_index(self, index):
        write_json(self.sim_index_path, index)

    def cache_path(self, key):
        return self.simresults / f"{key}.csv"

    def load_result(self, sid) -> SimResult:
        entry = self.sim_index().get(sid)
        if entry is None or entry.get("status") != "ok":
            raise MissingArtifactError(f"no simulation result for {sid}; run simulate first")
        return SimResult.from_csv(self.cache_path(entry["key"]), sid)

    # models
    def model_path(self, rom_id):
        return self.models / f"{rom_id}.json"

    def model_ids(self):
        return sorted(p.stem for p in self.models.glob("*.json"))
