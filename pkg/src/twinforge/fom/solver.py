"""Explicit finite-volume solver for coupled moisture and heat transport.

The quarter cuboid is discretized with a vertex-centred finite-volume grid:
nodes sit on a regular lattice including the boundary planes, each node owns
the box halfway to its neighbours (half boxes on the boundary). Fluxes are
evaluated on the faces between neighbouring nodes, so every internal exchange
is antisymmetric and the discrete scheme conserves moles and heat to
round-off.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import SolverError
from .materials import (
    MaterialConstants,
    effective_props,
    evaporation_flux,
    swelling_pressure,
)

SOLVER_VERSION = "fv-explicit-3"
OUTPUT_DT = 5.0
T_SANE = (200.0, 600.0)
FACES = ("x0", "x1", "y0", "y1", "z0", "z1")


@dataclass(frozen=True)
class CuboidGrid:
    """Quarter model of an Lx x Ly x Lz cuboid.

    The model spans [0, Lx/2] x [0, Ly] x [0, Lz/2]; the fibre axis is x and y
    is the height. ``nx, ny, nz`` count cells, so there are ``n + 1`` nodes per
    axis. Faces listed in ``symmetry`` or ``adiabatic`` exchange nothing; the
    remaining faces see the oven.
    """

    Lx: float = 0.070
    Ly: float = 0.020
    Lz: float = 0.040
    nx: int = 14
    ny: int = 8
    nz: int = 8
    symmetry: tuple = ("x0", "z0")
    adiabatic: tuple = ()

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 3:
            raise ValueError("need at least 3 cells per axis")
        if self.ny % 2:
            raise ValueError("ny must be even so that the core probe sits on a node")
        for face in tuple(self.symmetry) + tuple(self.adiabatic):
            if face not in FACES:
                raise ValueError(f"unknown face {face!r}")

    @property
    def shape(self):
        return (self.nx + 1, self.ny + 1, self.nz + 1)

    @property
    def spacing(self):
        return (0.5 * self.Lx / self.nx, self.Ly / self.ny, 0.5 * self.Lz / self.nz)

    @property
    def probe_A(self):
        """Geometric centre of the full cuboid."""
        return (0, self.ny // 2, 0)

    @property
    def probe_B(self):
        """Centre of the top surface."""
        return (0, self.ny, 0)

    @property
    def exchange_faces(self):
        closed = set(self.symmetry) | set(self.adiabatic)
        return tuple(f for f in FACES if f not in closed)

    def widths(self):
        out = []
        for n, d in zip((self.nx, self.ny, self.nz), self.spacing):
            w = np.full(n + 1, d)
            w[0] = w[-1] = 0.5 * d
            out.append(w)
        return out

    def volumes(self):
        wx, wy, wz = self.widths()
        return wx[:, None, None] * wy[None, :, None] * wz[None, None, :]

    def to_dict(self):
        return {"Lx": self.Lx, "Ly": self.Ly, "Lz": self.Lz, "nx": self.nx, "ny": self.ny,
                "nz": self.nz, "symmetry": list(self.symmetry), "adiabatic": list(self.adiabatic)}


@dataclass
class FieldState:
    c: np.ndarray
    T: np.ndarray
    t: float = 0.0

    @classmethod
    def initial(cls, grid: CuboidGrid, constants: MaterialConstants) -> "FieldState":
        return cls(np.full(grid.shape, constants.c0), np.full(grid.shape, constants.T0), 0.0)

    def copy(self) -> "FieldState":
        return FieldState(self.c.copy(), self.T.copy(), self.t)

    def mass_fraction(self, constants: MaterialConstants):
        return self.c * constants.M_w / constants.rho_eff


@dataclass
class SimResult:
    times: np.ndarray
    T_oven: np.ndarray
    T_A: np.ndarray
    T_B: np.ndarray
    signal_id: str = ""
    C_B: np.ndarray | None = None
    snapshots: list = field(default_factory=list)

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_s", "T_oven_K", "T_A_K", "T_B_K"])
            for row in zip(self.times, self.T_oven, self.T_A, self.T_B):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, signal_id=""):
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        with open(path) as fh:
            header = fh.readline().strip()
        if header != "t_s,T_oven_K,T_A_K,T_B_K":
            raise ValueError(f"{path}: unexpected header {header!r}")
        return cls(data[:, 0], data[:, 1], data[:, 2], data[:, 3], signal_id or Path(path).stem)

    @property
    def Y(self):
        """Observed states, shape (N, 2): columns T_A, T_B."""
        return np.column_stack([self.T_A, self.T_B])


def _face_slice(face):
    axis = "xyz".index(face[0])
    idx = [slice(None)] * 3
    idx[axis] = 0 if face[1] == "0" else -1
    return axis, tuple(idx)


class FomSolver:
    """Pre-computed geometry plus the explicit update for one grid and constant set."""

    def __init__(self, grid: CuboidGrid = CuboidGrid(), constants: MaterialConstants = MaterialConstants(),
                 evaporation: bool = True):
        self.grid = grid
        self.constants = constants
        self.evaporation = evaporation
        self.V = grid.volumes()
        wx, wy, wz = grid.widths()
        self.d = grid.spacing
        # conductance areas of internal faces normal to x, y, z
        self.A_int = (
            (wy[None, :, None] * wz[None, None, :]) * np.ones((grid.nx, 1, 1)),
            (wx[:, None, None] * wz[None, None, :]) * np.ones((1, grid.ny, 1)),
            (wx[:, None, None] * wy[None, :, None]) * np.ones((1, 1, grid.nz)),
        )
        # exchange faces flattened into one batch; edge nodes appear once per face
        self.boundary = []
        flat = np.arange(self.V.size).reshape(grid.shape)
        idx, areas, hs = [], [], []
        for face in grid.exchange_faces:
            axis, sl = _face_slice(face)
            area = [wx, wy, wz]
            area.pop(axis)
            A = area[0][:, None] * area[1][None, :]
            h = constants.h_amb_bottom if face == "y0" else constants.h_amb_side
            self.boundary.append((sl, A, h))
            idx.append(flat[sl].ravel())
            areas.append(A.ravel())
            hs.append(np.full(A.size, h))
        self.b_idx = np.concatenate(idx) if idx else np.zeros(0, dtype=int)
        self.b_A = np.concatenate(areas) if idx else np.zeros(0)
        self.b_h = np.concatenate(hs) if idx else np.zeros(0)

    def initial_state(self) -> FieldState:
        return FieldState.initial(self.grid, self.constants)

    def stable_dt(self, state: FieldState | None = None) -> float:
        """Explicit diffusive stability limit, evaluated at the state and at 400 K."""
        state = state or self.initial_state()
        k = self.constants
        C = np.clip(state.mass_fraction(k), 0.0, 0.99)
        rates = []
        for T in (state.T, np.full(self.grid.shape, 400.0)):
            props = effective_props(C, T, k)
            lam_max = np.maximum(props.lam_parallel, props.lam_perp)
            h_max = max([h for _, _, h in self.boundary], default=0.0)
            rate = lam_max * sum(2.0 / d ** 2 for d in self.d) / (k.rho_eff * props.cp)
            rate = rate + 2.0 * h_max / (min(self.d) * k.rho_eff * props.cp)
            rates.append(float(rate.max()))
        return 1.0 / max(rates)

    def auto_dt(self) -> float:
        dt = min(0.5 * self.stable_dt(), 0.5)
        return OUTPUT_DT / math.ceil(OUTPUT_DT / dt - 1e-12)

    def rates(self, state: FieldState, T_oven: float):
        """Time derivatives (dc/dt, dT/dt) of the semi-discrete system."""
        k = self.constants
        c, T = state.c, state.T
        C = c * (k.M_w / k.rho_eff)
        props = effective_props(C, T, k)
        lam = (props.lam_parallel, props.lam_perp, props.lam_perp)
        p, _, _ = swelling_pressure(C, T, k)
        mob = k.kappa / k.mu_w
        cw = k.rho_w * _water_cp(T)

        Q = np.zeros_like(T)
        M = np.zeros_like(c)
        for axis in range(3):
            d = self.d[axis]
            A = self.A_int[axis]
            lo = [slice(None)] * 3
            hi = [slice(None)] * 3
            lo[axis] = slice(None, -1)
            hi[axis] = slice(1, None)
            lo, hi = tuple(lo), tuple(hi)

            dT = T[hi] - T[lo]
            lam_f = 0.5 * (lam[axis][lo] + lam[axis][hi])
            q = lam_f * A * dT / d
            u = -mob * (p[hi] - p[lo]) / d
            c_up = np.where(u > 0, c[lo], c[hi])
            n = (u * c_up - k.D_cb * (c[hi] - c[lo]) / d) * A
            # upwinded energy flux carried by the water; antisymmetric, so the
            # discrete energy balance closes exactly
            adv = u * A * np.where(u > 0, cw[lo] * T[lo], cw[hi] * T[hi])

            Q[lo] += q - adv
            Q[hi] += -q + adv
            M[lo] -= n
            M[hi] += n

        if self.b_idx.size:
            size = T.size
            Ts = T.ravel()[self.b_idx]
            heat = self.b_h * (T_oven - Ts)
            if self.evaporation:
                ev = evaporation_flux(Ts, C.ravel()[self.b_idx], T_oven, self.b_h, k)
                heat = heat - ev.m_evap * k.H_evap
                M -= np.bincount(self.b_idx, self.b_A * ev.m_evap / k.M_w, size).reshape(T.shape)
            Q += np.bincount(self.b_idx, self.b_A * heat, size).reshape(T.shape)

        dc = M / self.V
        dT = Q / (k.rho_eff * props.cp * self.V)
        return dc, dT

    def step(self, state: FieldState, T_oven: float, dt: float) -> FieldState:
        dc, dT = self.rates(state, T_oven)
        new = FieldState(state.c + dt * dc, state.T + dt * dT, state.t + dt)
        self._check(new)
        return new

    def _check(self, state: FieldState):
        T = state.T
        if not (np.all(np.isfinite(T)) and np.all(np.isfinite(state.c))):
            raise SolverError("non-finite field values", state.t)
        if T.min() < T_SANE[0] or T.max() > T_SANE[1]:
            raise SolverError("temperature left the sanity range; time step too large?", state.t)
        if state.c.min() < 0:
            raise SolverError("negative moisture concentration", state.t)

    def probes(self, state: FieldState):
        g = self.grid
        return state.T[g.probe_A], state.T[g.probe_B], state.mass_fraction(self.constants)[g.probe_B]

    def run(self, values, dt_solver: float | None = None, signal_id: str = "",
            state: FieldState | None = None, snapshot_every: int = 0) -> SimResult:
        """Drive the model with a 5 s zero-order-hold oven temperature series."""
        values = np.asarray(values, dtype=float)
        dt = dt_solver or self.auto_dt()
        n_sub = OUTPUT_DT / dt
        if abs(n_sub - round(n_sub)) > 1e-9:
            raise ValueError("solver dt must divide the 5 s output interval")
        n_sub = int(round(n_sub))
        state = state or self.initial_state()
        N = len(values)
        T_A = np.empty(N)
        T_B = np.empty(N)
        C_B = np.empty(N)
        snaps = []
        T_A[0], T_B[0], C_B[0] = self.probes(state)
        for k in range(1, N):
            T_oven = values[k - 1]
            for _ in range(n_sub):
                state = self.step(state, T_oven, dt)
            state.t = k * OUTPUT_DT
            T_A[k], T_B[k], C_B[k] = self.probes(state)
            if snapshot_every and k % snapshot_every == 0:
                snaps.append(state.copy())
        return SimResult(np.arange(N) * OUTPUT_DT, values.copy(), T_A, T_B, signal_id, C_B, snaps)


def _water_cp(T):
    t = T - 273.15
    return 1000.0 * (4.1762 + (-9.0864e-5 + 5.4731e-6 * t) * t)


def darcy_velocity(p, grid: CuboidGrid, constants: MaterialConstants = MaterialConstants()):
    """Face-normal Darcy velocities (u_x, u_y, u_z) from nodal pressure.

    Arrays have one entry per internal face; symmetry planes carry no face, so
    their normal velocity is zero by construction.
    """
    p = np.asarray(p, dtype=float)
    mob = constants.kappa / constants.mu_w
    return tuple(-mob * np.diff(p, axis=axis) / d for axis, d in enumerate(grid.spacing))


def step_fields(state: FieldState, T_oven: float, dt: float, grid: CuboidGrid = CuboidGrid(),
                constants: MaterialConstants = MaterialConstants(), evaporation: bool = True) -> FieldState:
    return FomSolver(grid, constants, evaporation).step(state, T_oven, dt)


def simulate(signal, grid: CuboidGrid = CuboidGrid(), constants: MaterialConstants = MaterialConstants(),
             dt_solver: float | None = None, evaporation: bool = True) -> SimResult:
    """Full-order run for a Signal (or a plain 5 s sampled array)."""
    values = getattr(signal, "values", signal)
    signal_id = getattr(signal, "id", "")
    return FomSolver(grid, constants, evaporation).run(values, dt_solver, signal_id)
