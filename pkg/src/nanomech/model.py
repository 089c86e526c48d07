"""Physical parameters and elementary derived quantities.

Everything is strict SI internally; angular frequencies are in rad/s.
Conversions to lab units (GHz, kHz/nm, aF/um, pW) live in :mod:`nanomech.config`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import constants as _sc

TWO_PI = 2.0 * math.pi
LOSSLESS = math.inf


class DomainError(ValueError):
    """An argument lies outside the physical domain of a formula."""


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = _sc.hbar
    k_b: float = _sc.k


CONST = PhysicalConstants()
HBAR = CONST.hbar
K_B = CONST.k_b


def _positive(name, value, allow_inf=False):
    if not (value > 0) or (math.isinf(value) and not allow_inf) or math.isnan(value):
        raise DomainError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class CavityParams:
    """Notch-coupled microwave resonator.

    ``q_int`` may be :data:`LOSSLESS` (``math.inf``) for an ideal cavity.
    """

    omega_c: float
    q_int: float
    q_ext: float
    z_line: float = 70.0
    power_incident: float = 0.0

    def __post_init__(self):
        _positive("omega_c", self.omega_c)
        _positive("q_int", self.q_int, allow_inf=True)
        _positive("q_ext", self.q_ext, allow_inf=True)
        _positive("z_line", self.z_line)
        if not self.power_incident >= 0:
            raise DomainError(f"power_incident must be >= 0, got {self.power_incident!r}")

    @property
    def q_total(self) -> float:
        return total_quality_factor(self.q_int, self.q_ext)

    @property
    def linewidth(self) -> float:
        return cavity_linewidth(self)


@dataclass(frozen=True)
class MechanicalMode:
    omega_m: float
    mass: float
    q_m: float
    temperature_bath: float

    def __post_init__(self):
        _positive("omega_m", self.omega_m)
        _positive("mass", self.mass)
        _positive("q_m", self.q_m)
        # T = 0 is allowed: several zero-temperature limits are exercised.
        if not (self.temperature_bath >= 0 and math.isfinite(self.temperature_bath)):
            raise DomainError(f"temperature_bath must be >= 0, got {self.temperature_bath!r}")

    @property
    def gamma_m(self) -> float:
        """Energy damping rate (full linewidth), rad/s."""
        return self.omega_m / self.q_m

    @property
    def spring_constant(self) -> float:
        return spring_constant(self)

    @property
    def x_zp(self) -> float:
        """Zero-point displacement sqrt(hbar / 2 m omega_m)."""
        return math.sqrt(HBAR / (2.0 * self.mass * self.omega_m))

    def at_temperature(self, temperature: float) -> "MechanicalMode":
        return MechanicalMode(self.omega_m, self.mass, self.q_m, temperature)


@dataclass(frozen=True)
class CouplingModel:
    """Geometry-to-frequency transduction.

    ``g`` is stored as a positive magnitude |d omega_c / dx|; the physical
    shift is a red shift (omega_c decreases as the beam approaches the
    centre conductor). Only g**2 enters any formula downstream.
    """

    dcb_dx: float
    dcd_dx: float
    g: float

    def __post_init__(self):
        for name in ("dcb_dx", "dcd_dx", "g"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise DomainError(f"{name} must be finite, got {value!r}")
        if self.g < 0:
            raise DomainError("g is stored as a magnitude and must be >= 0")

    @classmethod
    def from_geometry(cls, dcb_dx: float, dcd_dx: float, cavity: CavityParams) -> "CouplingModel":
        return cls(dcb_dx, dcd_dx, coupling_from_geometry(dcb_dx, cavity))


def total_quality_factor(q_int: float, q_ext: float) -> float:
    """Loaded quality factor, (1/q_int + 1/q_ext)**-1."""
    _positive("q_int", q_int, allow_inf=True)
    _positive("q_ext", q_ext, allow_inf=True)
    if math.isinf(q_int) and math.isinf(q_ext):
        return math.inf
    return 1.0 / (1.0 / q_int + 1.0 / q_ext)


def cavity_linewidth(cavity: CavityParams) -> float:
    return cavity.omega_c / total_quality_factor(cavity.q_int, cavity.q_ext)


def spring_constant(mode: MechanicalMode) -> float:
    return mode.mass * mode.omega_m**2


def coupling_from_geometry(dcb_dx: float, cavity: CavityParams) -> float:
    """Cavity pull |d omega_c/dx| of a lambda/4 line with the beam at the voltage antinode.

    (1/omega_c) d omega_c/dx = -dC_b/dx * 4 Z_1 omega_c / 2 pi; the sign is dropped.
    """
    if dcb_dx < 0:
        raise DomainError("dcb_dx must be >= 0")
    return cavity.omega_c * dcb_dx * 4.0 * cavity.z_line * cavity.omega_c / TWO_PI
