"""Detection chain: beam motion -> cavity frequency -> Q-quadrature voltage, and back.

Phase-noise floors are referred to the off-resonance carrier amplitude V0
at the incident power, so the amplifier contributes V0**2 * k_b T_N / P
to the voltage PSD.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cavity import ReadoutGeometry, quadrature_responsivity
from .mechanics import thermal_displacement_psd
from .model import K_B, TWO_PI, CavityParams, CouplingModel, DomainError, MechanicalMode


@dataclass(frozen=True)
class NoiseModel:
    t_n: float = 0.0
    a_tls: float = 0.0
    tls_exponent: float = 0.5
    gain_factor: float = 1.0

    def __post_init__(self):
        if not self.t_n >= 0:
            raise DomainError("t_n must be >= 0")
        if not self.a_tls >= 0:
            raise DomainError("a_tls must be >= 0")
        if not 0 < self.tls_exponent < 2:
            raise DomainError("tls_exponent must lie in (0, 2)")


@dataclass(frozen=True, eq=False)
class DetectedSpectrum:
    frequencies: np.ndarray
    s_v_q: np.ndarray
    carrier: ReadoutGeometry
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        _check_grid(self.frequencies)
        if self.s_v_q.shape != self.frequencies.shape:
            raise DomainError("s_v_q and frequencies differ in shape")
        if np.any(self.s_v_q < 0):
            raise DomainError("PSD values must be non-negative")


def _check_grid(nu):
    nu = np.asarray(nu)
    if nu.ndim != 1 or nu.size < 2:
        raise DomainError("frequency grid must be 1-D with at least 2 points")
    if not np.all(np.isfinite(nu)) or np.any(nu <= 0):
        raise DomainError("frequency grid must be finite and positive")
    if np.any(np.diff(nu) <= 0):
        raise DomainError("frequency grid must be strictly increasing")


def amplifier_phase_floor(t_n: float, power_at_detector: float) -> float:
    """White phase-noise floor k_b T_N / P, rad^2/Hz."""
    if not power_at_detector > 0:
        raise DomainError("power_at_detector must be > 0")
    return K_B * t_n / power_at_detector


def tls_phase_noise(model: NoiseModel, nu):
    nu = np.asarray(nu, dtype=float)
    if np.any(nu <= 0):
        raise DomainError("TLS noise is defined for nu > 0 only")
    out = model.a_tls * nu ** (-model.tls_exponent)
    return out if out.ndim else float(out)


def tls_crossover(model: NoiseModel, power: float) -> float:
    """Frequency below which TLS noise exceeds the amplifier floor."""
    floor = amplifier_phase_floor(model.t_n, power)
    if model.a_tls == 0:
        return 0.0
    if floor == 0:
        return math.inf
    return (model.a_tls / floor) ** (1.0 / model.tls_exponent)


def filter_term(nu, cavity: CavityParams, geometry: ReadoutGeometry):
    """Cavity filtering of the motional sidebands, bin by bin.

    Probe on resonance: 1 + 4 (2 pi nu / gamma_c)**2. Probe detuned by
    +-omega_m: the sideband at |detuning| lands on resonance, so the term is
    evaluated at the sideband's offset from the cavity centre.
    """
    gamma_c = cavity.linewidth
    offset = TWO_PI * np.asarray(nu, dtype=float) - abs(geometry.detuning)
    return 1.0 + 4.0 * (offset / gamma_c) ** 2


def forward_spectrum(
    mode: MechanicalMode,
    cavity: CavityParams,
    coupling: CouplingModel,
    geometry: ReadoutGeometry,
    noise: NoiseModel,
    grid,
    seed: int | None = None,
    averages: int | None = None,
    extra_displacement=None,
) -> DetectedSpectrum:
    """Expected Q-quadrature voltage PSD on ``grid`` (Hz).

    With ``seed`` set, each bin is multiplied by the mean of ``averages``
    (default 1) independent unit exponential deviates, i.e. the statistics
    of an averaged periodogram. ``extra_displacement`` adds a further
    displacement PSD (m^2/Hz) on the grid before transduction.
    """
    nu = np.asarray(grid, dtype=float)
    _check_grid(nu)
    s_x = np.asarray(thermal_displacement_psd(mode, TWO_PI * nu - mode.omega_m))
    if extra_displacement is not None:
        s_x = s_x + np.asarray(extra_displacement, dtype=float)
    resp = quadrature_responsivity(geometry, cavity)
    signal = noise.gain_factor**2 * resp**2 * coupling.g**2 * s_x / filter_term(nu, cavity, geometry)
    phase = np.zeros_like(nu)
    if noise.t_n > 0:
        phase += amplifier_phase_floor(noise.t_n, cavity.power_incident)
    if noise.a_tls > 0:
        phase += tls_phase_noise(noise, nu)
    s_v = signal + geometry.v0**2 * phase
    meta = {"seed": seed, "averages": averages, "probe_detuning_rad_s": geometry.detuning}
    if seed is not None:
        n_avg = 1 if averages is None else int(averages)
        if n_avg < 1:
            raise DomainError("averages must be >= 1")
        rng = np.random.default_rng(seed)
        s_v = s_v * rng.gamma(shape=n_avg, scale=1.0 / n_avg, size=nu.size)
    return DetectedSpectrum(nu, s_v, geometry, meta)


def add_tone(spectrum: DetectedSpectrum, nu_tone: float, v_rms_sq: float) -> DetectedSpectrum:
    """Add a coherent tone of mean-square voltage ``v_rms_sq`` to the nearest bin.

    The bin value grows by v_rms_sq / df so that the tone's integrated power is preserved.
    """
    nu = spectrum.frequencies
    i = int(np.argmin(np.abs(nu - nu_tone)))
    df = float(np.median(np.diff(nu)))
    s = spectrum.s_v_q.copy()
    s[i] += v_rms_sq / df
    return DetectedSpectrum(nu, s, spectrum.carrier, dict(spectrum.metadata, tone_hz=float(nu[i])))


def conversion_factor(nu, cavity: CavityParams, geometry: ReadoutGeometry):
    """(rad/s)^2 per V^2 taking S_V^Q to the cavity-frequency PSD."""
    if geometry.s_min >= 1.0:
        raise DomainError("uncoupled cavity (S_min = 1) carries no frequency signal")
    q = cavity.q_total
    return (
        cavity.omega_c**2 * filter_term(nu, cavity, geometry)
        / ((2.0 * q) ** 2 * geometry.v0**2 * (1.0 - geometry.s_min) ** 2)
    )


def volts_to_cavity_freq_psd(spectrum: DetectedSpectrum, cavity: CavityParams, geometry: ReadoutGeometry | None = None):
    """Convert S_V^Q to S_omega_c bin by bin; returns a SpectrumSeries."""
    from .spectra import SpectrumSeries

    geometry = spectrum.carrier if geometry is None else geometry
    factor = conversion_factor(spectrum.frequencies, cavity, geometry)
    return SpectrumSeries(
        spectrum.frequencies.copy(),
        spectrum.s_v_q * factor,
        units="(rad/s)^2/Hz",
        metadata=dict(spectrum.metadata),
    )


SPECTRUM_COLUMNS = ("nu_hz", "s_v_q_v2hz")
