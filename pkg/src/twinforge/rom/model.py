"""Neural-ODE reduced-order model and its JSON container."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ModelCorruptError, RolloutDivergedError, SchemaError, UnsupportedVersionError
from ..signals import DT
from . import kernels

SCHEMA_VERSION = 1
U_RANGE = (279.15, 473.15)
X_RANGE = (279.15, 380.0)


def to_unit(x, bounds):
    lo, hi = bounds
    return 2.0 * (np.asarray(x, dtype=float) - lo) / (hi - lo) - 1.0


def from_unit(z, bounds):
    lo, hi = bounds
    return lo + 0.5 * (np.asarray(z, dtype=float) + 1.0) * (hi - lo)


@dataclass
class RomModel:
    """State derivative ``f([X, I], U)``: one sigmoid hidden layer, linear output.

    ``theta`` is the flat parameter vector (see :mod:`.kernels`). States and
    excitation are mapped to [-1, 1] over their operating ranges, and the ODE
    time unit is one 5 s sample.
    """

    theta: np.ndarray
    n_obs: int = 2
    n_free: int = 2
    hidden: int = 16
    u_range: tuple = U_RANGE
    x_ranges: tuple = (X_RANGE, X_RANGE)
    dt: float = 5.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.ascontiguousarray(self.theta, dtype=float)
        if self.theta.shape != (kernels.n_params(self.n_state, self.hidden),):
            raise ModelCorruptError("parameter vector does not match the architecture")
        if not np.all(np.isfinite(self.theta)):
            raise ModelCorruptError("non-finite weights")
        self.u_range = tuple(float(v) for v in self.u_range)
        self.x_ranges = tuple(tuple(float(v) for v in r) for r in self.x_ranges)

    @property
    def n_state(self):
        return self.n_obs + self.n_free

    @property
    def n_params(self):
        return self.theta.size

    def layers(self):
        """(W1, b1, W2, b2) views into theta."""
        S, H = self.n_state, self.hidden
        D = S + 1
        W1 = self.theta[:H * D].reshape(H, D)
        b1 = self.theta[H * D:H * D + H]
        o = H * D + H
        W2 = self.theta[o:o + S * H].reshape(S, H)
        b2 = self.theta[o + S * H:]
        return W1, b1, W2, b2

    def normalize_states(self, X):
        X = np.asarray(X, dtype=float)
        return np.stack([to_unit(X[..., i], r) for i, r in enumerate(self.x_ranges)], axis=-1)

    def denormalize_states(self, Z):
        return np.stack([from_unit(Z[..., i], r) for i, r in enumerate(self.x_ranges)], axis=-1)

    def rhs(self, state, u):
        """Normalized derivative per output step."""
        if not np.all(np.isfinite(self.theta)):
            raise ModelCorruptError("non-finite weights")
        state = np.ascontiguousarray(state, dtype=float)
        return kernels.rhs_kernel(self.theta, self.n_state, self.hidden, state, float(u))

    def initial_state(self, X0):
        s0 = np.zeros(self.n_state)
        s0[:self.n_obs] = self.normalize_states(np.asarray(X0, dtype=float))
        return s0

    def rollout_normalized(self, u_norm, s0, limit=kernels.DIVERGENCE_LIMIT):
        states, status = kernels.rollout_kernel(
            self.theta, self.n_state, self.hidden, self.n_obs, np.ascontiguousarray(s0, dtype=float),
            np.ascontiguousarray(u_norm, dtype=float), limit)
        if status >= 0:
            raise RolloutDivergedError(int(status))
        return states

    def rollout(self, signal, X0) -> np.ndarray:
        """Predicted observed states in K, shape (N, n_obs), row 0 equal to X0."""
        values = getattr(signal, "values", signal)
        u = to_unit(values, self.u_range)
        states = self.rollout_normalized(u, self.initial_state(X0))
        return self.denormalize_states(states[:, :self.n_obs])

    def to_dict(self) -> dict:
        W1, b1, W2, b2 = self.layers()
        return {
            "schema_version": SCHEMA_VERSION,
            "architecture": {"n_obs": self.n_obs, "n_free": self.n_free, "hidden": self.hidden,
                             "activation": "sigmoid", "integrator": "rk4", "dt_s": self.dt},
            "normalization": {"u": list(self.u_range), "x": [list(r) for r in self.x_ranges],
                              "target": [-1.0, 1.0]},
            "weights": {"W1": W1.tolist(), "b1": b1.tolist(), "W2": W2.tolist(), "b2": b2.tolist()},
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RomModel":
        if not isinstance(doc, dict) or "schema_version" not in doc:
            raise SchemaError("missing schema_version")
        if doc["schema_version"] != SCHEMA_VERSION:
            raise UnsupportedVersionError(f"unsupported model schema version {doc['schema_version']!r}")
        try:
            arch = doc["architecture"]
            norm = doc["normalization"]
            w = doc["weights"]
            n_obs, n_free, hidden = int(arch["n_obs"]), int(arch["n_free"]), int(arch["hidden"])
            S = n_obs + n_free
            parts = [np.asarray(w[k], dtype=float) for k in ("W1", "b1", "W2", "b2")]
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed model document: {exc}") from exc
        shapes = [(hidden, S + 1), (hidden,), (S, hidden), (S,)]
        for p, shape in zip(parts, shapes):
            if p.shape != shape:
                raise ModelCorruptError(f"weight shape {p.shape} != {shape}")
        theta = np.concatenate([p.ravel() for p in parts])
        return cls(theta, n_obs, n_free, hidden, tuple(norm["u"]), tuple(tuple(r) for r in norm["x"]),
                   float(arch.get("dt_s", 5.0)), doc.get("provenance", {}))


def save_model(model: RomModel, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict(), indent=1, sort_keys=True) + "\n")


def load_model(path) -> RomModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not a valid model file ({exc})") from exc
    return RomModel.from_dict(doc)


def write_rollout_csv(path, signal, prediction):
    """ROM trajectory in the SimResult layout, prediction columns suffixed ``_ROM_K``."""
    values = np.asarray(getattr(signal, "values", signal), dtype=float)
    prediction = np.asarray(prediction, dtype=float)
    if prediction.shape != (len(values), 2):
        raise ValueError("prediction must have shape (N, 2) matching the signal")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "T_oven_K", "T_A_ROM_K", "T_B_ROM_K"])
        for k, (u, (a, b)) in enumerate(zip(values, prediction)):
            w.writerow([repr(k * DT), repr(float(u)), repr(float(a)), repr(float(b))])
