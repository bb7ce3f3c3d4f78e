"""Lumped-element parameter algebra for transmons and LC resonators."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.constants import e as q_e, h, hbar, pi

from .errors import InvalidSpec


@dataclass(frozen=True)
class TransmonParams:
    """Transmon circuit parameters; energies are given as frequencies (E/h)."""

    c_total: float
    e_c: float
    e_j: float
    f_ge: float
    footprint_area: float

    def __post_init__(self):
        for name in ("c_total", "e_c", "e_j", "f_ge", "footprint_area"):
            if not getattr(self, name) > 0:
                raise InvalidSpec(f"{name} must be > 0")
        if self.e_j / self.e_c < 10:
            warnings.warn(
                f"E_J/E_C = {self.e_j / self.e_c:.1f} < 10: outside the transmon regime",
                stacklevel=2,
            )


@dataclass(frozen=True)
class ResonatorLC:
    inductance: float
    capacitance: float
    f_r: float
    kappa_int: float = 0.0
    kappa_ext: float = 0.0

    def __post_init__(self):
        if not self.inductance > 0 or not self.capacitance > 0:
            raise InvalidSpec("inductance and capacitance must be > 0")
        if self.kappa_int < 0 or self.kappa_ext < 0:
            raise InvalidSpec("linewidths must be >= 0")
        f_lc = lc_frequency(self.inductance, self.capacitance)
        if abs(self.f_r - f_lc) > 1e-6 * f_lc:
            raise InvalidSpec(f"f_r = {self.f_r:.6g} inconsistent with 1/(2 pi sqrt(LC)) = {f_lc:.6g}")

    @classmethod
    def from_lc(cls, inductance: float, capacitance: float, **kw) -> "ResonatorLC":
        return cls(inductance, capacitance, lc_frequency(inductance, capacitance), **kw)


def charging_energy(c_total: float) -> float:
    """Single-electron charging energy as a frequency: E_C/h = e^2 / (2 C h)."""
    if not c_total > 0:
        raise InvalidSpec(f"c_total must be > 0, got {c_total}")
    return q_e**2 / (2.0 * c_total * h)


def capacitance_from_charging_energy(e_c: float) -> float:
    """Inverse of charging_energy: C = e^2 / (2 h E_C)."""
    if not e_c > 0:
        raise InvalidSpec(f"e_c must be > 0, got {e_c}")
    return q_e**2 / (2.0 * h * e_c)


def transmon_frequency(e_c: float, e_j: float) -> float:
    """Ground-to-excited transition frequency sqrt(8 E_J E_C) - E_C (leading order)."""
    if not e_j > e_c:
        raise InvalidSpec(f"need e_j > e_c, got e_j={e_j:.4g}, e_c={e_c:.4g}")
    return float(np.sqrt(8.0 * e_j * e_c) - e_c)


def lc_frequency(inductance: float, capacitance: float) -> float:
    """Resonance frequency 1 / (2 pi sqrt(L C))."""
    if not inductance > 0 or not capacitance > 0:
        raise InvalidSpec("inductance and capacitance must be > 0")
    return 1.0 / (2.0 * pi * np.sqrt(inductance * capacitance))


def capacitance_for_frequency(inductance: float, f_target: float) -> float:
    """Capacitance that resonates a given inductance at f_target."""
    if not inductance > 0 or not f_target > 0:
        raise InvalidSpec("inductance and f_target must be > 0")
    return 1.0 / ((2.0 * pi * f_target) ** 2 * inductance)


def q_from_t1(f: float, t1: float) -> float:
    """Quality factor assigned to an energy relaxation time: Q = 2 pi f T1."""
    if not f > 0 or not t1 > 0:
        raise InvalidSpec("f and t1 must be > 0")
    return 2.0 * pi * f * t1


def q_per_area(q: float, area: float) -> float:
    """Quality factor per footprint area in 1/m^2 (divide by 1e12 for um^-2)."""
    if not area > 0:
        raise InvalidSpec(f"area must be > 0, got {area}")
    return q / area


def q_per_area_um2(q: float, area: float) -> float:
    """q_per_area expressed in the conventional um^-2."""
    return q_per_area(q, area) * 1e-12


def photon_number(
    power_at_device: float,
    f0: float,
    kappa_int: float,
    kappa_ext: float,
    detuning: float = 0.0,
) -> float:
    """Steady-state intra-cavity photon number of a driven single-port cavity.

    n = 4 kappa_ext P / (hbar w ((kappa_int + kappa_ext)^2 + 4 detuning^2)),
    with all rates in rad/s.
    """
    if not (kappa_int > 0 and kappa_ext > 0 and f0 > 0):
        raise InvalidSpec("rates and frequency must be > 0")
    if power_at_device < 0:
        raise InvalidSpec("power must be >= 0")
    omega = 2.0 * pi * f0
    kappa = kappa_int + kappa_ext
    return 4.0 * kappa_ext * power_at_device / (hbar * omega * (kappa**2 + 4.0 * detuning**2))


def dbm_to_watt(p_dbm: float, attenuation_db: float = 0.0) -> float:
    """Convert a source power in dBm, minus line attenuation, to watts."""
    return 1e-3 * 10.0 ** ((p_dbm - attenuation_db) / 10.0)
