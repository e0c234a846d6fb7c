"""Material model of the chicken-meat porous medium.

Thermophysical component properties follow the Choi & Okos (1986) polynomials
(Choi, Y., Okos, M.R., "Effects of temperature and composition on the thermal
properties of foods", in: Food Engineering and Process Applications, Vol. 1,
Elsevier, 1986, pp. 93-101), evaluated in degrees Celsius.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from ..errors import DomainError

R_GAS = 8.314462618
M_AIR = 0.028965
CP_AIR = 1006.0
T_BOIL = 373.15
COMPONENTS = ("water", "protein", "fat", "ash")

# (k, cp [kJ/kgK], rho) coefficients a0 + a1*T + a2*T^2, T in degC
_CHOI_OKOS = {
    "water": ((0.57109, 1.7625e-3, -6.7036e-6),
              (4.1762, -9.0864e-5, 5.4731e-6),
              (997.18, 3.1439e-3, -3.7574e-3)),
    "protein": ((0.17881, 1.1958e-3, -2.7178e-6),
                (2.0082, 1.2089e-3, -1.3129e-6),
                (1329.9, -0.5184, 0.0)),
    "fat": ((0.18071, -2.7604e-4, -1.7749e-7),
            (1.9842, 1.4733e-3, -4.8008e-6),
            (925.59, -0.41757, 0.0)),
    "ash": ((0.32962, 1.4011e-3, -2.9069e-6),
            (1.0926, 1.8896e-3, -3.6817e-6),
            (2423.8, -0.28063, 0.0)),
}


@dataclass(frozen=True)
class MaterialConstants:
    C0: float = 0.76
    T0: float = 279.15
    rho_eff: float = 1050.0
    D_cb: float = 3e-10
    h_amb_side: float = 44.0
    h_amb_bottom: float = 50.0
    H_evap: float = 2.3e6
    T_sigma: float = 315.0
    T_bar: float = 342.15
    Delta_T: float = 4.0
    G_max: float = 92000.0
    G_0: float = 13500.0
    kappa: float = 3e-17
    mu_w: float = 0.988e-3
    rho_w: float = 998.0
    M_w: float = 0.018015
    Phi_amb: float = 0.05
    p_amb: float = 101325.0
    Le: float = 0.91
    y_protein: float = 0.21
    y_ash: float = 0.01
    y_fat: float = 0.01

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise DomainError(f"{f.name} must be strictly positive")
        for name in ("C0", "Phi_amb", "y_protein", "y_ash", "y_fat"):
            if not getattr(self, name) < 1:
                raise DomainError(f"{name} must lie in (0, 1)")
        # The tabulated composition sums to 0.99; dry fractions are renormalized
        # in dry_mass_fractions(), so only overshoot is rejected.
        if self.C0 + self.y_protein + self.y_ash + self.y_fat > 1 + 1e-9:
            raise DomainError("C0 + dry mass fractions exceeds 1")

    @property
    def c0(self) -> float:
        """Initial molar water concentration, mol/m^3."""
        return self.C0 * self.rho_eff / self.M_w

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **kwargs) -> "MaterialConstants":
        return replace(self, **kwargs)

    @classmethod
    def from_file(cls, path) -> "MaterialConstants":
        """Read a flat ``name = value`` file (SI units, field names as keys)."""
        text = Path(path).read_text()
        parser = configparser.ConfigParser()
        parser.optionxform = str
        parser.read_string("[constants]\n" + text)
        return cls.from_mapping(parser["constants"])

    @classmethod
    def from_mapping(cls, mapping) -> "MaterialConstants":
        known = {f.name for f in fields(cls)}
        unknown = set(mapping) - known
        if unknown:
            raise KeyError(f"unknown material constants: {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in mapping.items()})


def _poly(coeffs, t):
    a0, a1, a2 = coeffs
    return a0 + (a1 + a2 * t) * t


def choi_okos_component_props(T):
    """Per-component conductivity (W/mK), specific heat (J/kgK) and density.

    Returns ``{component: (k, cp, rho)}``; accepts scalars or arrays in K,
    valid for 250 K <= T <= 500 K.
    """
    T = np.asarray(T, dtype=float)
    if np.any(~np.isfinite(T)) or np.any(T < 250.0) or np.any(T > 500.0):
        raise DomainError("Choi-Okos correlations are valid for 250 K <= T <= 500 K")
    t = T - 273.15
    out = {}
    for name, (k, cp, rho) in _CHOI_OKOS.items():
        out[name] = (_poly(k, t), 1000.0 * _poly(cp, t), _poly(rho, t))
    return out


def dry_mass_fractions(C, constants: MaterialConstants):
    """Mass fractions (protein, fat, ash) at water fraction C.

    The dry components keep their tabulated ratios and fill 1 - C.
    """
    dry = np.array([constants.y_protein, constants.y_fat, constants.y_ash])
    scale = (1.0 - np.asarray(C, dtype=float)) / dry.sum()
    return tuple(d * scale for d in dry)


@dataclass
class EffectiveProps:
    lam_parallel: np.ndarray
    lam_perp: np.ndarray
    cp: np.ndarray
    phi: dict


def mixture_conductivity(phi, lam):
    """Parallel (arithmetic) and serial (harmonic) volume-weighted means."""
    phi = [np.asarray(p, dtype=float) for p in phi]
    parallel = sum(p * l for p, l in zip(phi, lam))
    perp = 1.0 / sum(p / l for p, l in zip(phi, lam))
    return parallel, perp


def effective_props(C, T, constants: MaterialConstants = MaterialConstants()) -> EffectiveProps:
    C = np.asarray(C, dtype=float)
    if np.any(C < 0) or np.any(C >= 1):
        raise DomainError("water mass fraction must lie in [0, 1)")
    props = choi_okos_component_props(T)
    y_protein, y_fat, y_ash = dry_mass_fractions(C, constants)
    mass = {"water": C, "protein": y_protein, "fat": y_fat, "ash": y_ash}
    spec_vol = {name: mass[name] / props[name][2] for name in COMPONENTS}
    total = sum(spec_vol.values())
    phi = {name: spec_vol[name] / total for name in COMPONENTS}
    lam_par, lam_perp = mixture_conductivity(
        [phi[n] for n in COMPONENTS], [props[n][0] for n in COMPONENTS])
    cp = sum(mass[n] * props[n][1] for n in COMPONENTS)
    return EffectiveProps(lam_par, lam_perp, cp, phi)


def water_holding_capacity(T, constants: MaterialConstants = MaterialConstants()):
    T = np.asarray(T, dtype=float)
    return constants.C0 - 0.31 / (1.0 + 30.0 * np.exp(-0.17 * (T - constants.T_sigma)))


def storage_modulus(T, constants: MaterialConstants = MaterialConstants()):
    T = np.asarray(T, dtype=float)
    return constants.G_max + (constants.G_0 - constants.G_max) / (
        1.0 + np.exp((T - constants.T_bar) / constants.Delta_T))


def swelling_pressure(C, T, constants: MaterialConstants = MaterialConstants()):
    """Returns (p, C_eq, G') with p = G'(T) * (C - C_eq(T)) in Pa."""
    C_eq = water_holding_capacity(T, constants)
    G = storage_modulus(T, constants)
    return G * (np.asarray(C, dtype=float) - C_eq), C_eq, G


def saturation_pressure(T):
    """Saturation vapour pressure over liquid water (Buck, 1996), Pa."""
    t = np.asarray(T, dtype=float) - 273.15
    return 611.21 * np.exp((18.678 - t / 234.5) * (t / (257.14 + t)))


def water_activity(C):
    """a_w = 1 - 0.073 / M_db with dry-basis moisture M_db = C / (1 - C), floored at 0."""
    C = np.asarray(C, dtype=float)
    with np.errstate(divide="ignore"):
        M_db = C / (1.0 - C)
        a_w = 1.0 - 0.073 / M_db
    return np.where(C > 0, np.maximum(a_w, 0.0), 0.0)


def skin_exponent(T):
    """Smooth 7 -> 1 transition of the skin exponent around the boiling point."""
    T = np.asarray(T, dtype=float)
    return 1.0 + 6.0 / (1.0 + np.exp((T - T_BOIL) / 2.0))


@dataclass
class EvaporationFlux:
    m_evap: np.ndarray
    a_w: np.ndarray
    p_sat: np.ndarray
    beta_ext: np.ndarray
    beta_skin: np.ndarray
    beta_tot: np.ndarray


def external_mass_transfer(h_amb, T_oven, constants: MaterialConstants = MaterialConstants()):
    """Chilton-Colburn: beta_ext = h / (rho_air cp_air) * Le^(-2/3), m/s."""
    rho_air = constants.p_amb * M_AIR / (R_GAS * np.asarray(T_oven, dtype=float))
    return np.asarray(h_amb, dtype=float) / (rho_air * CP_AIR) * constants.Le ** (-2.0 / 3.0)


def evaporation_flux(T_surf, C_surf, T_oven, h_amb,
                     constants: MaterialConstants = MaterialConstants()) -> EvaporationFlux:
    """Surface evaporation mass flux m_evap in kg/(m^2 s); negative means condensation."""
    T_surf = np.asarray(T_surf, dtype=float)
    C_surf = np.asarray(C_surf, dtype=float)
    if np.any(C_surf >= 1) or np.any(C_surf < 0):
        raise DomainError("surface water fraction must lie in [0, 1)")
    a_w = water_activity(C_surf)
    p_sat = saturation_pressure(T_surf)
    beta_ext = external_mass_transfer(h_amb, T_oven, constants)
    beta_skin = 0.04 * C_surf ** skin_exponent(T_surf)
    denom = beta_ext + beta_skin
    beta_tot = np.where(denom > 0, beta_ext * beta_skin / np.where(denom > 0, denom, 1.0), 0.0)
    deficit = (a_w * p_sat / (R_GAS * T_surf)
               - constants.Phi_amb * constants.p_amb / (R_GAS * np.asarray(T_oven, dtype=float)))
    m_evap = constants.M_w * beta_tot * deficit
    m_evap = np.where((deficit < 0) & (C_surf < 0.05), 0.0, m_evap)
    return EvaporationFlux(m_evap, a_w, p_sat, beta_ext, beta_skin, beta_tot)
