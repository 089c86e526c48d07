"""Temperature-sweep coupling calibration and the measured noise budget."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import HBAR, K_B, DomainError, MechanicalMode
from .spectra import NumericalError

DEFAULT_MIN_TEMP = 0.127


class CalibrationError(NumericalError):
    pass


@dataclass(frozen=True, eq=False)
class TemperatureSweepResult:
    g_fit: float
    t_intercept: float
    fit_window_min_temp: float
    residuals: np.ndarray
    slope: float
    intercept: float
    temperatures: np.ndarray
    used: np.ndarray

    @property
    def excluded_temperatures(self) -> np.ndarray:
        return self.temperatures[~self.used]


def temperature_sweep_fit(points, mode: MechanicalMode, min_temp: float = DEFAULT_MIN_TEMP) -> TemperatureSweepResult:
    """Unweighted line through (T_frig, delta_omega_c^2) for T_frig >= ``min_temp``.

    delta_omega_c^2 = g^2 k_b (T_frig + T_ba) / (m omega_m^2), so
    g = sqrt(slope m omega_m^2 / k_b) and the intercept temperature is intercept/slope.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DomainError("points must be a sequence of (T_frig, delta_omega_c_sq) pairs")
    temps, y = pts[:, 0], pts[:, 1]
    used = temps >= min_temp
    if used.sum() < 3:
        raise CalibrationError(
            f"need >= 3 points at or above {min_temp * 1e3:.1f} mK, got {int(used.sum())}"
        )
    design = np.column_stack([temps[used], np.ones(used.sum())])
    (slope, intercept), *_ = np.linalg.lstsq(design, y[used], rcond=None)
    if not slope > 0:
        raise CalibrationError(f"non-positive slope {slope:.3e}: unphysical coupling")
    g_fit = math.sqrt(slope * mode.mass * mode.omega_m**2 / K_B)
    residuals = y - (slope * temps + intercept)
    return TemperatureSweepResult(
        g_fit=g_fit, t_intercept=intercept / slope, fit_window_min_temp=min_temp,
        residuals=residuals, slope=float(slope), intercept=float(intercept),
        temperatures=temps, used=used,
    )


def frequency_variance_to_temperature(delta_omega_c_sq: float, g: float, mode: MechanicalMode) -> float:
    if not g or g <= 0:
        raise CalibrationError("requires a prior calibration of g")
    return delta_omega_c_sq * mode.mass * mode.omega_m**2 / (g**2 * K_B)


def saturation_temperature(low_t_points, g: Optional[float], mode: MechanicalMode) -> float:
    """Equivalent beam temperature at the lowest fridge temperature measured."""
    pts = np.atleast_2d(np.asarray(low_t_points, dtype=float))
    if pts.size == 0:
        raise DomainError("need at least one base-temperature point")
    base = pts[np.argmin(pts[:, 0])]
    return frequency_variance_to_temperature(base[1], g, mode)


def imprecision_temperature(s_x_im: float, mode: MechanicalMode) -> float:
    """T_im = S_x^im m omega_m^2 gamma_m / (4 k_b)."""
    if s_x_im < 0:
        raise DomainError("s_x_im must be >= 0")
    return s_x_im * mode.mass * mode.omega_m**2 * mode.gamma_m / (4.0 * K_B)


def displacement_psd_from_temperature(temperature: float, mode: MechanicalMode) -> float:
    return 4.0 * K_B * temperature / (mode.mass * mode.omega_m**2 * mode.gamma_m)


def backaction_temperature(s_f_ba: float, mode: MechanicalMode) -> float:
    return s_f_ba / (4.0 * K_B * mode.mass * mode.gamma_m)


def sql_displacement_psd(mode: MechanicalMode) -> float:
    """S_x(SQL) = hbar / (m omega_m gamma_m)."""
    return HBAR / (mode.mass * mode.omega_m * mode.gamma_m)


def force_psd_from_temperature(temperature: float, mode: MechanicalMode) -> float:
    return 4.0 * K_B * temperature * mode.mass * mode.gamma_m


@dataclass(frozen=True)
class NoiseBudget:
    """Measured budget in temperature, displacement and force units.

    ``sql_ratio_linear`` compares the imprecision alone with S_x(SQL).
    ``sql_ratio_total_linear`` compares S_x^im + S_x^sat with 2 S_x(SQL),
    the sum of the imprecision and backaction contributions at the SQL.
    """

    t_im: float
    t_sat: float
    s_x_im: float
    s_x_sql: float
    sql_ratio_linear: float
    sql_ratio_sat_linear: float
    sql_ratio_total_linear: float
    force_sensitivity: float
    t_ba: Optional[float] = None
    power: Optional[float] = None

    def force_psd_total(self, mode: MechanicalMode) -> float:
        return force_psd_from_temperature(self.t_im + self.t_sat, mode)

    def heisenberg_product(self, mode: MechanicalMode) -> float:
        """S_x^im times the saturation-bounded force noise, to compare against hbar^2."""
        return self.s_x_im * force_psd_from_temperature(self.t_sat, mode)


def sql_ratio(temperature: float, mode: MechanicalMode) -> float:
    """S_x / S_x(SQL) = 4 k_b T / (hbar omega_m), in power units."""
    return 4.0 * K_B * temperature / (HBAR * mode.omega_m)


def budget(t_im: float, t_sat: float, mode: MechanicalMode, t_ba: Optional[float] = None,
           power: Optional[float] = None) -> NoiseBudget:
    if t_im < 0 or t_sat < 0:
        raise DomainError("temperatures must be >= 0")
    return NoiseBudget(
        t_im=t_im,
        t_sat=t_sat,
        s_x_im=displacement_psd_from_temperature(t_im, mode),
        s_x_sql=sql_displacement_psd(mode),
        sql_ratio_linear=math.sqrt(sql_ratio(t_im, mode)),
        sql_ratio_sat_linear=math.sqrt(sql_ratio(t_sat, mode)),
        sql_ratio_total_linear=math.sqrt(sql_ratio(t_im + t_sat, mode) / 2.0),
        force_sensitivity=math.sqrt(force_psd_from_temperature(t_im + t_sat, mode)),
        t_ba=t_ba,
        power=power,
    )


BUDGET_COLUMNS = ("power_w", "t_im_k", "t_sat_k", "sx_ratio_linear", "force_sens_n_rthz")


def budget_rows(budgets: Sequence[NoiseBudget]) -> np.ndarray:
    return np.array([
        [b.power if b.power is not None else np.nan, b.t_im, b.t_sat, b.sql_ratio_linear, b.force_sensitivity]
        for b in budgets
    ])
