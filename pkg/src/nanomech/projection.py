"""Quantum-limit projections for an ideal single-port reflection cavity.

The shot-noise imprecision is

    S_x^sn = hbar omega_c (1 + 4 (omega_m/gamma_c)^2) / (2 (g/omega_c)^2 P (4 Q)^2)

with Q = Q_ext (lossless cavity) and gamma_c = omega_c / Q. Quantum backaction
is S_F^ba = hbar^2 / S_x^sn.

Amplifier convention: a phase-insensitive amplifier of noise temperature T_N
raises the imprecision to N_amp * S_x^sn with N_amp = 2 k_b T_N / (hbar omega_c).
A quantum-limited amplifier (N_amp = 2, i.e. k_b T_N = hbar omega_c) then sits a
factor two above shot noise, and T_N = 5 K at 12 GHz gives a minimum total
uncertainty N_amp^(1/4) = 2.04 times the SQL. This is a convention chosen to
reproduce both figures, not a derivation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import optimize

from .calibration import imprecision_temperature, sql_displacement_psd
from .cavity import sideband_filter_factor
from .model import HBAR, K_B, CavityParams, DomainError, MechanicalMode

PROJECTION_COLUMNS = ("power_w", "sx_sn", "sx_ba", "sx_amp", "t_ba_k")


@dataclass(frozen=True)
class ProjectionScenario:
    cavity: CavityParams
    mode: MechanicalMode
    g: float
    t_n: float
    power_grid: tuple = ()

    def __post_init__(self):
        if not math.isinf(self.cavity.q_int):
            raise DomainError("projection assumes a lossless cavity (q_int = LOSSLESS)")
        grid = tuple(float(p) for p in self.power_grid)
        if any(p <= 0 for p in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise DomainError("power grid must be positive and strictly ascending")
        object.__setattr__(self, "power_grid", grid)
        if not self.g > 0:
            raise DomainError("g must be > 0")
        if not self.t_n >= 0:
            raise DomainError("t_n must be >= 0")

    @property
    def q(self) -> float:
        return self.cavity.q_ext

    @property
    def gamma_c(self) -> float:
        return self.cavity.omega_c / self.q


def _shot_noise_coefficient(s: ProjectionScenario) -> float:
    """A in S_x^sn = A / P."""
    wc = s.cavity.omega_c
    filt = sideband_filter_factor(s.mode.omega_m, s.gamma_c)
    return HBAR * wc * filt / (2.0 * (s.g / wc) ** 2 * (4.0 * s.q) ** 2)


def _mechanical_impedance(mode: MechanicalMode) -> float:
    return mode.mass * mode.omega_m * mode.gamma_m


def shot_noise_imprecision(scenario: ProjectionScenario, power):
    power = np.asarray(power, dtype=float)
    if np.any(power <= 0):
        raise DomainError("power must be > 0")
    out = _shot_noise_coefficient(scenario) / power
    return out if out.ndim else float(out)


def quantum_backaction_force(scenario: ProjectionScenario, power):
    return HBAR**2 / shot_noise_imprecision(scenario, power)


def backaction_displacement(scenario: ProjectionScenario, power):
    return quantum_backaction_force(scenario, power) / _mechanical_impedance(scenario.mode) ** 2


def amplifier_noise_number(scenario: ProjectionScenario) -> float:
    return 2.0 * K_B * scenario.t_n / (HBAR * scenario.cavity.omega_c)


def amplifier_imprecision(scenario: ProjectionScenario, power):
    return amplifier_noise_number(scenario) * shot_noise_imprecision(scenario, power)


def intersection_power(scenario: ProjectionScenario) -> float:
    """Power at which shot-noise imprecision equals backaction displacement noise.

    A/P = hbar^2 P / (A (m omega_m gamma_m)^2)  =>  P* = A m omega_m gamma_m / hbar.
    """
    return _shot_noise_coefficient(scenario) * _mechanical_impedance(scenario.mode) / HBAR


def intersection_power_bisect(scenario: ProjectionScenario, lo: float | None = None, hi: float | None = None) -> float:
    """Root of log(S_x^sn / S_x^ba) bracketed by the power grid (widened if needed)."""
    grid = scenario.power_grid
    lo = lo if lo is not None else (grid[0] if grid else 1e-15)
    hi = hi if hi is not None else (grid[-1] if grid else 1.0)

    def f(logp):
        p = math.exp(logp)
        return math.log(shot_noise_imprecision(scenario, p) / backaction_displacement(scenario, p))

    a, b = math.log(lo), math.log(hi)
    while f(a) < 0:
        a -= 2.0
    while f(b) > 0:
        b += 2.0
    return math.exp(optimize.brentq(f, a, b, xtol=1e-14, rtol=1e-14))


def minimum_total_uncertainty(scenario: ProjectionScenario) -> tuple[float, float]:
    """Power minimising S_x^amp + S_x^ba and the linear ratio to 2 S_x(SQL).

    The minimum is 2 sqrt(N_amp) hbar/(m omega_m gamma_m) at P = sqrt(N_amp) P*,
    so the linear ratio is N_amp^(1/4).
    """
    n_amp = amplifier_noise_number(scenario)
    if n_amp == 0:
        return 0.0, 0.0
    return math.sqrt(n_amp) * intersection_power(scenario), n_amp**0.25


@dataclass(frozen=True, eq=False)
class ProjectionTable:
    power: np.ndarray
    sx_sn: np.ndarray
    sx_ba: np.ndarray
    sx_amp: np.ndarray
    t_sn: np.ndarray
    t_ba: np.ndarray
    t_amp: np.ndarray

    def rows(self) -> np.ndarray:
        return np.column_stack([self.power, self.sx_sn, self.sx_ba, self.sx_amp, self.t_ba])

    def __len__(self):
        return self.power.size


def projection_table(scenario: ProjectionScenario, powers: Sequence[float] | None = None) -> ProjectionTable:
    p = np.asarray(scenario.power_grid if powers is None else powers, dtype=float)
    if p.size == 0:
        raise DomainError("power grid is empty")
    sn = np.atleast_1d(shot_noise_imprecision(scenario, p))
    ba = np.atleast_1d(backaction_displacement(scenario, p))
    amp = np.atleast_1d(amplifier_imprecision(scenario, p))
    mode = scenario.mode
    to_t = np.vectorize(lambda s: imprecision_temperature(s, mode))
    return ProjectionTable(p, sn, ba, amp, to_t(sn), to_t(ba), to_t(amp))


def sql_reference(scenario: ProjectionScenario) -> float:
    return sql_displacement_psd(scenario.mode)

