"""Excitation signals for the oven temperature.

A Signal is sampled every 5 s from t = 0 and is interpreted as a zero-order
hold: the value at sample k applies on [5k, 5k + 5). Every synthesizer is a
pure function of its parameters and an integer seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import Xoshiro256, derive_seed

DT = 5.0
T_COLD = 279.15
T_LOW = 279.15
T_HIGH = 473.15
KINDS = ("aprbs", "sinaprbs", "multisine", "schroeder-multisine", "step", "sine", "concat")

F_RANGE = (0.001, 0.01)
F_SPLIT = 0.5 * (F_RANGE[0] + F_RANGE[1])


@dataclass
class Signal:
    id: str
    kind: str
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if not str(self.id).isalnum():
            raise ValueError(f"signal id must be alphanumeric, got {self.id!r}")
        self.values = np.asarray(self.values, dtype=float)

    @property
    def times(self):
        return np.arange(len(self.values)) * DT

    @property
    def horizon(self):
        return (len(self.values) - 1) * DT

    def to_files(self, directory) -> tuple[Path, Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        csv_path = directory / f"{self.id}.csv"
        json_path = directory / f"{self.id}.json"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_s", "T_oven_K"])
            for t, v in zip(self.times, self.values):
                w.writerow([repr(float(t)), repr(float(v))])
        doc = {"id": self.id, "kind": self.kind, "seed": self.meta.get("seed"), "meta": self.meta}
        json_path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
        return csv_path, json_path

    @classmethod
    def from_files(cls, csv_path) -> "Signal":
        csv_path = Path(csv_path)
        doc = json.loads(csv_path.with_suffix(".json").read_text())
        with open(csv_path) as fh:
            rows = list(csv.reader(fh))
        if rows[0] != ["t_s", "T_oven_K"]:
            raise ValueError(f"{csv_path}: unexpected header {rows[0]}")
        values = np.array([float(r[1]) for r in rows[1:]])
        return cls(doc["id"], doc["kind"], values, doc["meta"])


def _n_samples(horizon):
    n = horizon / DT
    if abs(n - round(n)) > 1e-9:
        raise ValueError("horizon must be a multiple of 5 s")
    return int(round(n)) + 1


def _clip(values):
    clipped = np.clip(values, T_LOW, T_HIGH)
    return clipped, float(np.mean(clipped != values))


def _hold_values(times, switch_times, levels, before=T_COLD):
    values = np.full(len(times), before)
    for t_i, level in zip(switch_times, levels):
        values[times >= t_i] = level
    return values


def synth_aprbs(seed: int, horizon: float = 1400.0, T_min: float = 293.15, T_max: float = 473.15,
                t_hold: float = 300.0, T_margin: float = 10.0, n_levels: int = 4,
                signal_id: str | None = None) -> Signal:
    """Multi-level APRBS with one level per equal-width temperature band.

    Levels are drawn per band and permuted until adjacent levels differ by at
    least ``T_margin``; switch times are drawn on [0, horizon] until adjacent
    switches (and the last switch and the horizon) are ``t_hold`` apart.
    """
    if horizon < n_levels * t_hold:
        raise ValueError("horizon too short for the hold time")
    if not T_max > T_min:
        raise ValueError("T_max must exceed T_min")
    rng = Xoshiro256(seed)
    width = (T_max - T_min) / n_levels

    while True:
        drawn = [rng.uniform(T_min + i * width, T_min + (i + 1) * width) for i in range(n_levels)]
        order = rng.permutation(range(n_levels))
        levels = [drawn[i] for i in order]
        if all(abs(b - a) >= T_margin for a, b in zip(levels, levels[1:])):
            break

    # Uniform draws on the shortened interval plus i * t_hold offsets give the
    # same law as redrawing on [0, horizon] until all gaps are >= t_hold.
    slack = horizon - n_levels * t_hold
    base = sorted(rng.uniform(0.0, slack) for _ in range(n_levels))
    switch = [b + i * t_hold for i, b in enumerate(base)]

    times = np.arange(_n_samples(horizon)) * DT
    values = _hold_values(times, switch, levels)
    meta = {
        "seed": int(seed), "horizon": horizon, "T_min": T_min, "T_max": T_max, "t_hold": t_hold,
        "T_margin": T_margin, "levels": levels, "bands": [int(i) for i in order],
        "switch_times": switch, "T_start": T_COLD,
    }
    return Signal(signal_id or f"ap{seed % 100000}", "aprbs", values, meta)


def aprbs_to_sinaprbs(signal: Signal, speed: str | None = None, seed: int | None = None,
                      signal_id: str | None = None) -> Signal:
    """Replace every level jump of an APRBS by a quarter-sine ramp.

    The ramp ``a + (b - a) sin(2 pi f (t - t_i))`` starts at the switch time
    and lasts a quarter period. ``speed='fast'`` draws f from the upper half of
    [0.001, 0.01] Hz, ``'slow'`` from the lower half, ``None`` from all of it.
    """
    if signal.kind != "aprbs":
        raise ValueError("sinAPRBS transforms need an APRBS input")
    if speed not in (None, "fast", "slow"):
        raise ValueError("speed must be 'fast', 'slow' or None")
    lo, hi = {None: F_RANGE, "fast": (F_SPLIT, F_RANGE[1]), "slow": (F_RANGE[0], F_SPLIT)}[speed]
    meta = signal.meta
    seed = derive_seed(meta["seed"], "sinaprbs") if seed is None else seed
    rng = Xoshiro256(seed)

    switch = list(meta["switch_times"])
    levels = list(meta["levels"])
    starts = [meta.get("T_start", T_COLD)] + levels[:-1]
    ends_of_plateau = switch[1:] + [meta["horizon"]]
    times = signal.times
    values = signal.values.copy()
    freqs, durations, shrunk = [], [], []
    for t_i, a, b, t_next in zip(switch, starts, levels, ends_of_plateau):
        f = rng.uniform(lo, hi)
        duration = 1.0 / (4.0 * f)
        if duration > t_next - t_i:
            duration = t_next - t_i
            f = 1.0 / (4.0 * duration)
            shrunk.append(True)
        else:
            shrunk.append(False)
        window = (times >= t_i) & (times < t_i + duration)
        values[window] = a + (b - a) * np.sin(2.0 * math.pi * f * (times[window] - t_i))
        freqs.append(f)
        durations.append(duration)

    new_meta = dict(meta)
    new_meta.update({"source": signal.id, "speed": speed or "mixed", "seed": int(seed),
                     "frequencies": freqs, "transition_durations": durations,
                     "transition_shrunk": shrunk, "parent_seed": meta["seed"]})
    suffix = {None: "s", "fast": "f", "slow": "s"}[speed]
    default_id = f"sin{signal.id}" if speed is None else f"{signal.id}{suffix}"
    return Signal(signal_id or default_id, "sinaprbs", values, new_meta)


def schroeder_phases(m: int) -> np.ndarray:
    j = np.arange(1, m + 1)
    return -j * (j - 1) * math.pi / m


def multisine_values(times, amplitude, f0, harmonics, phases, offset):
    times = np.asarray(times, dtype=float)
    u = np.full(len(times), float(offset))
    for l, phi in zip(harmonics, phases):
        u = u + amplitude * np.cos(2.0 * math.pi * l * f0 * times + phi)
    return u


def synth_multisine(seed: int, m: int | None = None, schroeder: bool = False,
                    f0_range=F_RANGE, A_range=(1.0, 30.0), offset_range=(320.0, 430.0),
                    horizon: float = 1400.0, amplitude: float | None = None, f0: float | None = None,
                    offset: float | None = None, signal_id: str | None = None) -> Signal:
    """Sum of m cosines on harmonics 1..m of f0 with a common amplitude.

    Random phases are uniform on [0, 10] rad; Schroeder phases are
    -j(j-1)pi/m. Values leaving the operating range are clipped and the
    clipped fraction is stored in ``meta['clip_fraction']``.
    """
    rng = Xoshiro256(seed)
    if m is None:
        m = 2 + rng.randbelow(9)
    if m < 1:
        raise ValueError("need at least one sine")
    f0 = rng.uniform(*f0_range) if f0 is None else f0
    amplitude = rng.uniform(*A_range) if amplitude is None else amplitude
    offset = rng.uniform(*offset_range) if offset is None else offset
    harmonics = list(range(1, m + 1))
    if schroeder:
        phases = schroeder_phases(m).tolist()
    else:
        phases = [rng.uniform(0.0, 10.0) for _ in range(m)]
    times = np.arange(_n_samples(horizon)) * DT
    raw = multisine_values(times, amplitude, f0, harmonics, phases, offset)
    values, clip_fraction = _clip(raw)
    kind = "schroeder-multisine" if schroeder else "multisine"
    meta = {"seed": int(seed), "m": m, "f0": f0, "amplitude": amplitude, "offset": offset,
            "harmonics": harmonics, "phases": phases, "horizon": horizon,
            "clip_fraction": clip_fraction}
    prefix = "sms" if schroeder else "ms"
    return Signal(signal_id or f"{prefix}{seed % 100000}", kind, values, meta)


def synth_basic(kind: str, horizon: float = 1400.0, level: float = T_HIGH, t_step: float = 0.0,
                amplitude: float = 0.0, frequency: float = 0.001, offset: float = 376.15,
                signal_id: str | None = None) -> Signal:
    """Step (cold until ``t_step``, then ``level``) or single sine ``A sin(2 pi f t) + c``."""
    times = np.arange(_n_samples(horizon)) * DT
    if kind == "step":
        values = np.where(times >= t_step, level, T_COLD)
        meta = {"level": level, "t_step": t_step, "horizon": horizon}
    elif kind == "sine":
        values = offset + amplitude * np.sin(2.0 * math.pi * frequency * times)
        meta = {"amplitude": amplitude, "frequency": frequency, "offset": offset, "horizon": horizon}
    else:
        raise ValueError("synth_basic supports 'step' and 'sine'")
    if np.any(values < T_LOW - 1e-9) or np.any(values > T_HIGH + 1e-9):
        raise ValueError("parameters leave the operating range")
    meta["seed"] = None
    return Signal(signal_id or kind, kind, values, meta)


def concat_repeat(signal: Signal, repeats: int = 2, signal_id: str | None = None) -> Signal:
    """Periodic extension: sample k takes the value of sample k mod N (N intervals)."""
    if repeats < 2:
        raise ValueError("repeats must be at least 2")
    base = signal.values
    N = len(base) - 1
    values = base[np.arange(N * repeats + 1) % N]
    meta = {"source": signal.id, "source_kind": signal.kind, "repeats": repeats,
            "seed": signal.meta.get("seed")}
    return Signal(signal_id or f"{signal.id}x{repeats}", "concat", values, meta)


def load_signal(path) -> Signal:
    return Signal.from_files(path)
