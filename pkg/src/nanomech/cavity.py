"""Linear response of a notch-coupled quarter-wave cavity.

Phase convention: arg S21 is taken relative to the off-resonance carrier,
so arg S21(omega_c) = 0 and the frequency-modulation signal appears in
the imaginary (Q) quadrature.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import TWO_PI, CavityParams, DomainError, total_quality_factor


@dataclass(frozen=True)
class TransmissionPoint:
    omega: float
    s21: complex


@dataclass(frozen=True)
class ReadoutGeometry:
    """Carrier snapshot at the mixer.

    v0 is the off-resonance transmitted amplitude; detuning is the probe
    offset from omega_c (0 in the bad-cavity limit, +-omega_m in the good-cavity limit).
    """

    v0: float
    s_min: float
    detuning: float = 0.0

    def __post_init__(self):
        if not self.v0 > 0:
            raise DomainError(f"v0 must be positive, got {self.v0!r}")
        if not 0.0 <= self.s_min <= 1.0:
            raise DomainError(f"s_min must lie in [0, 1], got {self.s_min!r}")

    @classmethod
    def on_resonance(cls, cavity: CavityParams, v0: float, detuning: float = 0.0) -> "ReadoutGeometry":
        return cls(v0=v0, s_min=s_min(cavity), detuning=detuning)


def transmission(cavity: CavityParams, omega):
    """Complex S21 past the cavity; scalar or array ``omega`` in rad/s."""
    q = total_quality_factor(cavity.q_int, cavity.q_ext)
    omega = np.asarray(omega, dtype=float)
    x = 2.0 * q * (omega - cavity.omega_c) / cavity.omega_c
    s21 = np.asarray(1.0 - (q / cavity.q_ext) / (1.0 + 1j * x))
    return s21 if s21.ndim else complex(s21)


def frequency_sweep(cavity: CavityParams, omegas) -> list[TransmissionPoint]:
    omegas = np.asarray(omegas, dtype=float)
    return [TransmissionPoint(float(w), complex(s)) for w, s in zip(omegas, transmission(cavity, omegas))]


def s_min(cavity: CavityParams) -> float:
    """On-resonance transmission amplitude 1 - Q/Q_ext."""
    q = total_quality_factor(cavity.q_int, cavity.q_ext)
    if np.isinf(cavity.q_ext):
        return 1.0
    return float(min(max(1.0 - q / cavity.q_ext, 0.0), 1.0))


def quadrature_responsivity(geometry: ReadoutGeometry, cavity: CavityParams) -> float:
    """dV_Q/d omega_c in V per rad/s for an on-resonance probe and slow excursions."""
    q = total_quality_factor(cavity.q_int, cavity.q_ext)
    return 2.0 * q / cavity.omega_c * geometry.v0 * (1.0 - geometry.s_min)


def sideband_filter_factor(omega_m, gamma_c):
    """1 + 4 (omega_m / gamma_c)**2; tends to 1 in the bad-cavity limit."""
    omega_m = np.asarray(omega_m, dtype=float)
    if np.any(omega_m < 0) or not gamma_c > 0:
        raise DomainError("sideband_filter_factor needs omega_m >= 0 and gamma_c > 0")
    out = 1.0 + 4.0 * (omega_m / gamma_c) ** 2
    return out if out.ndim else float(out)


def sweep_table(cavity: CavityParams, omegas) -> np.ndarray:
    """Rows of (omega_hz, re_s21, im_s21, mag_db, phase_rad); omega_hz is omega/2pi."""
    omegas = np.asarray(omegas, dtype=float)
    s21 = np.atleast_1d(transmission(cavity, omegas))
    mag_db = 20.0 * np.log10(np.abs(s21))
    return np.column_stack([omegas / TWO_PI, s21.real, s21.imag, mag_db, np.angle(s21)])


SWEEP_COLUMNS = ("omega_hz", "re_s21", "im_s21", "mag_db", "phase_rad")
