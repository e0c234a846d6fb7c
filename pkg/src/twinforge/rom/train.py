"""Training by backpropagation through the RK4 rollout."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import TrainingDivergedError
from ..rng import Xoshiro256
from . import kernels
from .model import RomModel, to_unit


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3000
    lr: float = 1e-3
    lr_schedule: str = "constant"  # or "cosine" (decays to lr_final)
    lr_final: float = 1e-4
    seed: int = 0
    hidden: int = 16
    n_free: int = 2
    tol: float = 0.0
    clip: float = 10.0
    output_scale: float = 0.01
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.epochs < 1 or self.hidden < 1:
            raise ValueError("epochs and hidden width must be >= 1")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError("lr_schedule must be 'constant' or 'cosine'")

    def learning_rates(self) -> np.ndarray:
        e = np.arange(self.epochs)
        if self.lr_schedule == "constant":
            return np.full(self.epochs, self.lr)
        return self.lr_final + 0.5 * (self.lr - self.lr_final) * (1 + np.cos(math.pi * e / self.epochs))

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    loss_history: np.ndarray
    train_rmse: dict = field(default_factory=dict)
    epochs_run: int = 0

    @property
    def final_loss(self):
        return float(np.nanmin(self.loss_history))


def init_theta(n_state: int, hidden: int, seed: int, output_scale: float = 0.01) -> np.ndarray:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) from the project RNG.

    The output layer is scaled by ``output_scale`` so that the untrained model
    starts close to a constant trajectory instead of drifting off range.
    """
    rng = Xoshiro256(seed)
    D = n_state + 1

    def block(n, fan_in, scale=1.0):
        bound = scale / math.sqrt(fan_in)
        return [rng.uniform(-bound, bound) for _ in range(n)]

    theta = (block(hidden * D, D) + block(hidden, D)
             + block(n_state * hidden, hidden, output_scale) + block(n_state, hidden, output_scale))
    return np.array(theta)


def new_model(config: TrainConfig, n_obs: int = 2) -> RomModel:
    S = n_obs + config.n_free
    return RomModel(init_theta(S, config.hidden, config.seed, config.output_scale), n_obs,
                    config.n_free, config.hidden)


def pack_scenarios(model: RomModel, scenarios):
    """Normalized, back-to-back arrays for the compiled loss."""
    s0s, us, ys, offsets = [], [], [], [0]
    for signal, result in scenarios:
        values = np.asarray(getattr(signal, "values", signal), dtype=float)
        Y = np.column_stack([result.T_A, result.T_B])
        if len(values) != len(Y):
            raise ValueError("signal and simulation result lengths differ")
        if len(values) < 2:
            raise ValueError("scenario needs at least one time step")
        s0s.append(model.initial_state(Y[0]))
        us.append(to_unit(values, model.u_range))
        ys.append(model.normalize_states(Y))
        offsets.append(offsets[-1] + len(values))
    return (np.array(s0s), np.ascontiguousarray(np.concatenate(us)),
            np.ascontiguousarray(np.concatenate(ys)), np.array(offsets, dtype=np.int64))


def loss_and_grad(model: RomModel, scenarios):
    s0s, u, y, off = pack_scenarios(model, scenarios)
    grad = np.empty_like(model.theta)
    loss = kernels.batch_loss_grad(model.theta, model.n_state, model.hidden, model.n_obs,
                                   s0s, u, y, off, grad)
    return loss, grad


def train(scenarios, config: TrainConfig = TrainConfig(), model: RomModel | None = None):
    """Fit a ROM to one or more (Signal, SimResult) scenarios; returns (model, report)."""
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("need at least one training scenario")
    model = model or new_model(config)
    s0s, u, y, off = pack_scenarios(model, scenarios)
    theta, hist, diverged = kernels.adam_kernel(
        model.theta, model.n_state, model.hidden, model.n_obs, s0s, u, y, off,
        config.learning_rates(), config.clip, config.tol, 0.9, 0.999, 1e-8,
        config.weight_decay)
    if diverged >= 0:
        raise TrainingDivergedError(int(diverged))
    trained = RomModel(theta, model.n_obs, model.n_free, model.hidden, model.u_range,
                       model.x_ranges, model.dt)
    report = TrainReport(np.asarray(hist), epochs_run=len(hist) - 1)
    for signal, result in scenarios:
        values = getattr(signal, "values", signal)
        pred = trained.rollout_normalized(to_unit(values, trained.u_range),
                                          trained.initial_state([result.T_A[0], result.T_B[0]]),
                                          limit=np.inf)
        pred = trained.denormalize_states(pred[:, :trained.n_obs])
        err = pred[1:] - np.column_stack([result.T_A, result.T_B])[1:]
        report.train_rmse[getattr(signal, "id", "")] = float(np.sqrt(np.mean(err ** 2)))
    trained.provenance = {
        "signals": [getattr(s, "id", "") for s, _ in scenarios],
        "seed": config.seed,
        "final_loss": report.final_loss,
        "train_rmse_K": report.train_rmse,
        "config": config.to_dict(),
    }
    return trained, report


def gradient_check(model: RomModel, scenario, eps: float = 1e-5, n_check: int = 50,
                   seed: int = 0) -> float:
    """Max relative difference between BPTT and central finite differences.

    Checks a random subset of ``n_check`` parameters (all of them if fewer).
    Entries are compared relative to ``max(|g|, |fd|, 1e-7 * max|g|)``.
    """
    signal, result = scenario
    if len(getattr(signal, "values", signal)) < 2:
        raise ValueError("scenario has no time steps")
    loss, grad = loss_and_grad(model, [scenario])
    P = model.n_params
    rng = Xoshiro256(seed)
    idx = range(P) if P <= n_check else sorted(rng.sample(range(P), n_check))
    floor = 1e-7 * float(np.max(np.abs(grad)))
    worst = 0.0
    for i in idx:
        fd = []
        for sign in (1.0, -1.0):
            theta = model.theta.copy()
            theta[i] += sign * eps
            probe = RomModel(theta, model.n_obs, model.n_free, model.hidden, model.u_range, model.x_ranges)
            fd.append(loss_and_grad(probe, [scenario])[0])
        g_fd = (fd[0] - fd[1]) / (2.0 * eps)
        denom = max(abs(grad[i]), abs(g_fd), floor)
        if denom > 0:
            worst = max(worst, abs(grad[i] - g_fd) / denom)
    return worst
