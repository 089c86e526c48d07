"""Motion of the nanomechanical beam: thermal spectra, driven response, Langevin trajectories.

All PSDs are single-sided and per Hz, with Lorentzians written in angular
detuning, so the area under a thermal peak is S0 * gamma_m / 4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .model import K_B, TWO_PI, DomainError, MechanicalMode

_CHUNK = 1 << 22


class StabilityError(ValueError):
    """Integrator step too coarse for the oscillator."""


@dataclass(frozen=True)
class DriveSpec:
    v_dc: float
    v_ac: float
    omega_drive: float

    def __post_init__(self):
        if not self.v_ac >= 0:
            raise DomainError("v_ac must be >= 0")
        if not self.omega_drive > 0:
            raise DomainError("omega_drive must be > 0")


@dataclass(frozen=True, eq=False)
class Trajectory:
    dt: float
    samples: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.dt > 0:
            raise DomainError("dt must be > 0")
        if len(self.samples) < 2:
            raise DomainError("trajectory needs at least 2 samples")
        if not np.all(np.isfinite(self.samples)):
            raise DomainError("trajectory contains non-finite samples")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(len(self.samples))

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt


def thermal_force_psd(mode: MechanicalMode) -> float:
    """Single-sided thermal force PSD 4 k_b T m gamma_m, N^2/Hz."""
    return 4.0 * K_B * mode.temperature_bath * mode.mass * mode.gamma_m


def thermal_displacement_psd(mode: MechanicalMode, delta_omega):
    """Thermally driven displacement PSD (m^2/Hz) at angular detuning omega - omega_m."""
    delta_omega = np.asarray(delta_omega, dtype=float)
    g = mode.gamma_m
    peak = thermal_force_psd(mode) / (mode.mass * mode.omega_m * g) ** 2
    out = peak / (1.0 + 4.0 * delta_omega**2 / g**2)
    return out if out.ndim else float(out)


def equipartition_variance(mode: MechanicalMode) -> float:
    return K_B * mode.temperature_bath / (mode.mass * mode.omega_m**2)


def electrostatic_force(drive: DriveSpec, dcd_dx: float) -> float:
    return drive.v_dc * drive.v_ac * dcd_dx


def driven_response(mode: MechanicalMode, force: float, omega_drive):
    """Steady-state amplitude (m) and phase (rad) of a sinusoidally driven oscillator.

    Phase runs from 0 below resonance through -pi/2 to -pi above it.
    """
    w = np.asarray(omega_drive, dtype=float)
    re = mode.omega_m**2 - w**2
    im = mode.gamma_m * w
    amp = (force / mode.mass) / np.hypot(re, im)
    phase = -np.arctan2(im, re)
    if amp.ndim == 0:
        return float(amp), float(phase)
    return amp, phase


def max_stable_dt(mode: MechanicalMode) -> float:
    return TWO_PI / (50.0 * mode.omega_m)


def burn_in_time(mode: MechanicalMode) -> float:
    return 5.0 / mode.gamma_m


def simulate_langevin(
    mode: MechanicalMode,
    duration: float,
    dt: float | None = None,
    seed: int = 0,
    drive: DriveSpec | None = None,
    dcd_dx: float = 0.0,
    decimate: int = 1,
    x0: float = 0.0,
    v0: float = 0.0,
) -> Trajectory:
    """Integrate m x'' + m gamma x' + m omega^2 x = F_th + F_el on a fixed step.

    The thermal force is white with single-sided PSD 4 k_b T m gamma, sampled as
    independent Gaussians of variance S_F / (2 dt). The first 5/gamma_m of the
    run is discarded; every ``decimate``-th remaining step is returned.

    The update has the two-step form of semi-implicit Euler,

        x[n+1] = a1 x[n] - a2 x[n-1] + b F[n]

    but with pole-matched coefficients a1 = 2 exp(-gamma dt/2) cos(omega_d dt),
    a2 = exp(-gamma dt) and impulse-invariant gain b. Plain Euler coefficients
    shift the resonance by (omega dt)^2/24, which at dt = T_m/50 is more than a
    linewidth for Q_m of a few thousand.
    """
    if dt is None:
        dt = max_stable_dt(mode)
    if not dt > 0:
        raise DomainError("dt must be > 0")
    if dt > max_stable_dt(mode) * (1 + 1e-12):
        raise StabilityError(
            f"dt={dt:.3e} s exceeds the stability cap 2pi/(50 omega_m) = {max_stable_dt(mode):.3e} s"
        )
    if decimate < 1:
        raise DomainError("decimate must be >= 1")
    n_burn = int(math.ceil(burn_in_time(mode) / dt))
    n_total = int(round(duration / dt))
    if n_total <= n_burn:
        raise DomainError(
            f"duration {duration:.3e} s does not exceed the burn-in {burn_in_time(mode):.3e} s"
        )

    m, g, w = mode.mass, mode.gamma_m, mode.omega_m
    wd = math.sqrt(max(w * w - g * g / 4.0, 0.0))
    decay = math.exp(-g * dt / 2.0)
    osc = math.sin(wd * dt) / wd if wd > 0 else dt
    a = np.array([1.0, -2.0 * decay * math.cos(wd * dt), decay * decay])
    b = np.array([dt * decay * osc / m])
    # y[-1] = x0, y[-2] = x0 - dt*v0
    zi = signal.lfiltic(b, a, y=[x0, x0 - dt * v0])

    force_sigma = math.sqrt(thermal_force_psd(mode) / (2.0 * dt))
    f_el = electrostatic_force(drive, dcd_dx) if drive is not None else 0.0
    rng = np.random.default_rng(seed)

    kept = []
    # x[n] for n >= 1 is produced from F[n-1]; step index n counts integration steps
    step = 0
    while step < n_total:
        n = min(_CHUNK, n_total - step)
        force = rng.standard_normal(n) * force_sigma if force_sigma > 0 else np.zeros(n)
        if f_el:
            t = dt * np.arange(step, step + n)
            force += f_el * np.cos(drive.omega_drive * t)
        x, zi = signal.lfilter(b, a, force, zi=zi)
        idx = np.arange(step + 1, step + n + 1)
        sel = (idx >= n_burn) & ((idx - n_burn) % decimate == 0)
        kept.append(x[sel])
        step += n

    samples = np.concatenate(kept)
    meta = {
        "omega_m": w, "mass": m, "q_m": mode.q_m, "temperature_bath": mode.temperature_bath,
        "integrator_dt": dt, "decimate": decimate, "burn_in_s": n_burn * dt,
    }
    return Trajectory(dt=dt * decimate, samples=samples, seed=seed, meta=meta)
