"""Batch workflows behind the CLI.

Each ``run_*`` function takes a :class:`~nanomech.config.Scenario`, writes its
artifacts into ``out_dir`` and returns a summary dict. Files are staged in a
temporary directory and moved into place only after the whole run succeeds.
Sweep points draw their seeds from ``point_seed(master, index)`` so results
do not depend on execution order or worker count.
"""
from __future__ import annotations

import contextlib
import hashlib
import json
import logging
import math
import shutil
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .calibration import (
    BUDGET_COLUMNS, TemperatureSweepResult, budget, budget_rows, frequency_variance_to_temperature,
    imprecision_temperature, temperature_sweep_fit,
)
from .cavity import SWEEP_COLUMNS, quadrature_responsivity, sweep_table
from .config import ConfigError, Scenario
from .io import inventory, write_csv, write_report, write_spectrum
from .mechanics import Trajectory, driven_response, electrostatic_force, simulate_langevin
from .model import TWO_PI, LOSSLESS
from .projection import (
    PROJECTION_COLUMNS, ProjectionScenario, intersection_power, intersection_power_bisect,
    minimum_total_uncertainty, projection_table, amplifier_noise_number,
)
from .readout import (
    SPECTRUM_COLUMNS, DetectedSpectrum, add_tone, amplifier_phase_floor, filter_term, forward_spectrum,
    volts_to_cavity_freq_psd,
)
from .spectra import FitError, LorentzianFit, NumericalError, SpectrumSeries, fit_lorentzian, integrate_lorentzian, welch_psd

log = logging.getLogger(__name__)


def point_seed(master: int, index: int) -> int:
    """Stable per-point seed derived from the master seed and the point index."""
    digest = hashlib.sha256(f"{int(master)}:{int(index)}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _require_seed(scn: Scenario) -> int:
    seed = scn.run("seed")
    if seed is None:
        raise ConfigError("[run] seed is required for stochastic runs (or pass --seed)", source=scn.source)
    return int(seed)


def _map(fn: Callable, items: Sequence, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@contextlib.contextmanager
def staged_output(out_dir):
    """Yield a scratch directory whose files are moved into ``out_dir`` on success only."""
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".nanomech-", dir=out_dir.parent))
    try:
        yield tmp
        out_dir.mkdir(parents=True, exist_ok=True)
        for f in sorted(tmp.iterdir()):
            f.replace(out_dir / f.name)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def derived_quantities(scn: Scenario) -> dict:
    cav, mode = scn.cavity, scn.mode
    return {
        "q_total": cav.q_total,
        "gamma_c_rad_s": cav.linewidth,
        "gamma_m_rad_s": mode.gamma_m,
        "spring_constant_n_per_m": mode.spring_constant,
        "g_rad_s_per_m": scn.coupling.g,
        "g_source": "calibrated" if scn.g_calibrated is not None else "geometry",
    }


def write_manifest(tmp: Path, command: str, scn: Scenario, started: float, extra: Optional[dict] = None):
    outputs = inventory(p for p in tmp.iterdir() if p.name != "manifest.json")
    manifest = {
        "tool": "nanomech",
        "version": __version__,
        "command": command,
        "scenario": scn.serialize(),
        "derived": derived_quantities(scn),
        "outputs": outputs,
        "wall_clock_s": round(time.perf_counter() - started, 3),
    }
    if extra:
        manifest["summary"] = extra
    (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=float) + "\n")


def _scenario_meta(scn: Scenario, **more) -> dict:
    meta = {f"{sec}.{k}": v for sec, kv in sorted(scn.values.items()) for k, v in sorted(kv.items())}
    meta.update(more)
    return meta


# ---------------------------------------------------------------- measurement model


def detected_spectrum(scn: Scenario, power_w: float, temperature: float, seed: Optional[int],
                      averages: Optional[int], with_tone: bool = False) -> DetectedSpectrum:
    """Forward-model the Q-quadrature PSD at one power and beam temperature."""
    cav = scn.cavity_at(power_w)
    mode = scn.mode.at_temperature(temperature)
    geom = scn.geometry(power_w)
    spec = forward_spectrum(mode, cav, scn.coupling, geom, scn.noise, scn.grid(), seed=seed, averages=averages)
    if with_tone:
        drive = scn.drive
        if drive is None:
            raise ConfigError("[drive] section required for a driven measurement", source=scn.source)
        force = electrostatic_force(drive, scn.coupling.dcd_dx)
        x_amp, _ = driven_response(mode, force, drive.omega_drive)
        nu_d = drive.omega_drive / TWO_PI
        volts = scn.noise.gain_factor * quadrature_responsivity(geom, cav) * scn.coupling.g * x_amp
        v_ms = volts**2 / 2.0 / float(filter_term(nu_d, cav, geom))
        spec = add_tone(spec, nu_d, v_ms)
    return spec


def langevin_detected_spectrum(scn: Scenario, power_w: float, temperature: float, seed: int) -> DetectedSpectrum:
    """Time-domain route: Langevin x(t) -> V_Q(t) plus white amplifier noise -> Welch."""
    cav = scn.cavity_at(power_w)
    mode = scn.mode.at_temperature(temperature)
    geom = scn.geometry(power_w)
    traj = simulate_langevin(mode, scn.run("duration_s"), dt=scn.run("dt_s"), seed=seed,
                             decimate=scn.run("decimate"))
    resp = scn.noise.gain_factor * quadrature_responsivity(geom, cav) * scn.coupling.g
    filt = float(filter_term(mode.omega_m / TWO_PI, cav, geom))
    v = resp * traj.samples / math.sqrt(filt)
    if scn.noise.t_n > 0:
        s_white = geom.v0**2 * amplifier_phase_floor(scn.noise.t_n, power_w)
        rng = np.random.default_rng([seed, 1])
        v = v + rng.standard_normal(v.size) * math.sqrt(s_white / (2.0 * traj.dt))
    est = welch_psd(Trajectory(traj.dt, v, seed), scn.run("segment_length"), scn.run("overlap"), units="V^2/Hz")
    grid = scn.grid()
    keep = (est.frequencies >= grid[0]) & (est.frequencies <= grid[-1]) & (est.frequencies > 0)
    return DetectedSpectrum(est.frequencies[keep], est.psd[keep], geom, dict(est.metadata, engine="langevin"))


def _fit_window(scn: Scenario, mode) -> tuple:
    f_m = mode.omega_m / TWO_PI
    half = scn.run("fit_halfwidth_linewidths") * mode.gamma_m / TWO_PI
    return f_m - half, f_m + half


def fit_cavity_peak(scn: Scenario, spec: DetectedSpectrum, cav) -> tuple[SpectrumSeries, LorentzianFit]:
    s_wc = volts_to_cavity_freq_psd(spec, cav)
    fit = fit_lorentzian(s_wc, window=_fit_window(scn, scn.mode))
    return s_wc, fit


# ---------------------------------------------------------------- workflows


def run_simulate(scn: Scenario, out_dir) -> dict:
    started = time.perf_counter()
    seed = _require_seed(scn)
    cav, mode = scn.cavity, scn.mode
    with staged_output(out_dir) as tmp:
        omegas = cav.omega_c + cav.linewidth * np.linspace(-5, 5, 401)
        write_csv(tmp / "cavity_sweep.csv", SWEEP_COLUMNS, sweep_table(cav, omegas),
                  _scenario_meta(scn))

        drive = scn.drive
        traj = simulate_langevin(
            mode, scn.run("duration_s"), dt=scn.run("dt_s"), seed=point_seed(seed, 0),
            drive=drive, dcd_dx=scn.coupling.dcd_dx, decimate=scn.run("decimate"),
        )
        write_csv(tmp / "trajectory.csv", ("t_s", "x_m"), np.column_stack([traj.times, traj.samples]),
                  _scenario_meta(scn, seed=traj.seed, dt_s=traj.dt, **{f"traj.{k}": v for k, v in traj.meta.items()}))

        seg = min(scn.run("segment_length"), traj.samples.size)
        psd = welch_psd(traj, seg, scn.run("overlap"))
        write_spectrum(tmp / "welch.csv", psd, _scenario_meta(scn))

        spec = detected_spectrum(scn, cav.power_incident, mode.temperature_bath, point_seed(seed, 1),
                                 scn.run("averages"), with_tone=drive is not None)
        write_csv(tmp / "spectrum.csv", SPECTRUM_COLUMNS, np.column_stack([spec.frequencies, spec.s_v_q]),
                  _scenario_meta(scn, seed=point_seed(seed, 1), probe_detuning_rad_s=spec.carrier.detuning,
                                 v0_v=spec.carrier.v0, s_min=spec.carrier.s_min))
        i_peak = int(np.argmax(spec.s_v_q))
        summary = {
            "trajectory_samples": int(traj.samples.size),
            "trajectory_variance_m2": float(np.var(traj.samples)),
            "spectrum_peak_hz": float(spec.frequencies[i_peak]),
            "spectrum_df_hz": float(np.median(np.diff(spec.frequencies))),
        }
        write_manifest(tmp, "simulate", scn, started, summary)
    return summary


@dataclass
class CalibrationPoint:
    t_frig: float
    t_beam: float
    delta_omega_c_sq: float
    fit: Optional[LorentzianFit]
    error: str = ""


def calibration_point(scn: Scenario, index: int, t_frig: float, seed: int) -> CalibrationPoint:
    scn = scn.at_point(index)
    t_beam = max(t_frig, scn.sweep("saturation_mk") * 1e-3)
    cav = scn.cavity
    s = point_seed(seed, index)
    if scn.run("engine") == "langevin":
        spec = langevin_detected_spectrum(scn, cav.power_incident, t_beam, s)
    else:
        spec = detected_spectrum(scn, cav.power_incident, t_beam, s, scn.run("averages"))
    _, fit = fit_cavity_peak(scn, spec, cav)
    if not fit.converged:
        return CalibrationPoint(t_frig, t_beam, math.nan, fit, fit.message or "fit did not converge")
    return CalibrationPoint(t_frig, t_beam, integrate_lorentzian(fit), fit)


def run_calibrate(scn: Scenario, out_dir, workers: Optional[int] = None) -> dict:
    started = time.perf_counter()
    seed = _require_seed(scn)
    temps = [t * 1e-3 for t in scn.sweep("temperatures_mk")]
    if not temps:
        raise ConfigError("[sweep] temperatures_mk is empty", source=scn.source)
    workers = scn.run("workers") if workers is None else workers
    points = _map(lambda it: calibration_point(scn, it[0], it[1], seed), list(enumerate(temps)), workers)

    good = [p for p in points if p.error == ""]
    min_temp = scn.sweep("min_temp_mk") * 1e-3
    result = temperature_sweep_fit([(p.t_frig, p.delta_omega_c_sq) for p in good], scn.mode, min_temp)

    with staged_output(out_dir) as tmp:
        rows, k = [], 0
        for p in points:
            if p.error:
                rows.append([p.t_frig, p.t_beam, math.nan, 0, math.nan])
            else:
                rows.append([p.t_frig, p.t_beam, p.delta_omega_c_sq, float(result.used[k]), result.residuals[k]])
                k += 1
        write_csv(tmp / "calibration.csv",
                  ("t_frig_k", "t_beam_k", "delta_omega_c_sq_rad2_s2", "used", "residual_rad2_s2"),
                  rows, _scenario_meta(scn))
        report = calibration_report(result, points)
        write_report(tmp / "calibration_report.txt", report)
        write_manifest(tmp, "calibrate", scn, started, report)
    return report


def calibration_report(result: TemperatureSweepResult, points: Sequence[CalibrationPoint]) -> dict:
    excluded = [float(t) for t in result.excluded_temperatures]
    failed = [f"{p.t_frig * 1e3:.6g} mK: {p.error}" for p in points if p.error]
    return {
        "g_fit_rad_s_per_m": result.g_fit,
        "g_fit_khz_per_nm": result.g_fit / TWO_PI * 1e-9 / 1e3,
        "t_intercept_k": result.t_intercept,
        "slope_rad2_s2_per_k": result.slope,
        "intercept_rad2_s2": result.intercept,
        "fit_window_min_temp_k": result.fit_window_min_temp,
        "points_used": int(result.used.sum()),
        "points_excluded_below_window": len(excluded),
        "excluded_temperatures_k": excluded,
        "failed_points": failed,
    }


def budget_point(scn: Scenario, index: int, power_w: float, seed: int):
    """NoiseBudget for one power, or an error string if the peak fit fails."""
    g = scn.g_calibrated
    mode = scn.mode
    t_base = scn.sweep("base_temp_mk") * 1e-3
    t_beam = max(t_base, scn.sweep("saturation_mk") * 1e-3)
    cav = scn.cavity_at(power_w)
    spec = detected_spectrum(scn, power_w, t_beam, point_seed(seed, index), scn.run("averages"))
    _, fit = fit_cavity_peak(scn, spec, cav)
    if not fit.converged:
        return f"{power_w * 1e12:.6g} pW: {fit.message or 'fit did not converge'}"
    s_x_im = max(fit.background, 0.0) / g**2
    t_im = imprecision_temperature(s_x_im, mode)
    t_sat = frequency_variance_to_temperature(integrate_lorentzian(fit), g, mode)
    return budget(t_im, t_sat, mode, power=power_w)


def run_budget(scn: Scenario, out_dir, workers: Optional[int] = None) -> dict:
    started = time.perf_counter()
    if scn.g_calibrated is None:
        raise ConfigError("budget needs a calibrated coupling: set [coupling] g_khz_per_nm", source=scn.source)
    seed = _require_seed(scn)
    powers = [p * 1e-12 for p in scn.sweep("powers_pw")]
    if not powers:
        raise ConfigError("[sweep] powers_pw is empty", source=scn.source)
    workers = scn.run("workers") if workers is None else workers
    results = _map(lambda it: budget_point(scn, it[0], it[1], seed), list(enumerate(powers)), workers)
    rows = [r for r in results if not isinstance(r, str)]
    failed = [r for r in results if isinstance(r, str)]
    if not rows:
        raise FitError("budget fit failed at every power: " + "; ".join(failed))
    with staged_output(out_dir) as tmp:
        write_csv(tmp / "budget.csv", BUDGET_COLUMNS, budget_rows(rows), _scenario_meta(scn))
        best = min(rows, key=lambda b: b.force_sensitivity)
        summary = {
            "rows": len(rows),
            "s_x_sql_m2_hz": rows[0].s_x_sql,
            "best_force_sensitivity_n_rthz": best.force_sensitivity,
            "best_force_power_w": best.power,
            "min_sx_ratio_linear": min(b.sql_ratio_linear for b in rows),
            "failed_points": failed,
        }
        write_report(tmp / "budget_report.txt", summary)
        write_manifest(tmp, "budget", scn, started, summary)
    return {"summary": summary, "budgets": rows}


def projection_scenario(scn: Scenario) -> ProjectionScenario:
    if scn.g_calibrated is None:
        raise ConfigError("project needs [coupling] g_khz_per_nm", source=scn.source)
    powers = tuple(sorted(p * 1e-12 for p in scn.sweep("powers_pw")))
    if not powers:
        raise ConfigError("[sweep] powers_pw is empty: nothing to project", source=scn.source)
    cav = scn.cavity
    if not math.isinf(cav.q_int):
        raise ConfigError("projection assumes a lossless cavity: set [cavity] q_int = inf", source=scn.source)
    return ProjectionScenario(cav, scn.mode, scn.g_calibrated, scn.noise.t_n, powers)


def run_project(scn: Scenario, out_dir) -> dict:
    started = time.perf_counter()
    ps = projection_scenario(scn)
    table = projection_table(ps)
    p_min, ratio = minimum_total_uncertainty(ps)
    summary = {
        "intersection_power_w": intersection_power(ps),
        "intersection_power_bisect_w": intersection_power_bisect(ps),
        "amplifier_noise_number": amplifier_noise_number(ps),
        "min_uncertainty_power_w": p_min,
        "min_uncertainty_ratio_linear": ratio,
        "rows": len(table),
    }
    with staged_output(out_dir) as tmp:
        write_csv(tmp / "projection.csv", PROJECTION_COLUMNS, table.rows(), _scenario_meta(scn))
        write_report(tmp / "projection_report.txt", summary)
        write_manifest(tmp, "project", scn, started, summary)
    return summary


def tone_power(spec: DetectedSpectrum, nu_tone: float, guard: int = 2, span: int = 20,
               min_snr: float = 10.0) -> float:
    """Integrated power (V^2) of a coherent tone above the local noise median."""
    nu, s = spec.frequencies, spec.s_v_q
    i = int(np.argmin(np.abs(nu - nu_tone)))
    lo, hi = max(i - span, 0), min(i + span + 1, nu.size)
    neighbours = np.r_[s[lo:max(i - guard, lo)], s[min(i + guard + 1, hi):hi]]
    floor = float(np.median(neighbours)) if neighbours.size else 0.0
    excess = s[i] - floor
    if not excess > min_snr * max(floor, 1e-300) or excess <= 0:
        raise NumericalError(f"drive tone at {nu_tone:.6g} Hz not detectable above the local floor")
    return excess * float(np.median(np.diff(nu)))


def calibrate_gain_via_drive(scn_low: Scenario, scn_high: Scenario) -> dict:
    """Estimate the high-power responsivity gain from a fixed electrostatic drive.

    The driven peak is measured at both powers. Its power ratio, divided by the
    ratio of the known linear responsivities squared, is the square of the
    unknown gain at high power relative to the trusted low-power point.
    """
    for scn in (scn_low, scn_high):
        if scn.drive is None:
            raise NumericalError("gain calibration needs an electrostatic drive ([drive] section)")
        if scn.drive.v_ac == 0 or scn.drive.v_dc == 0 or scn.coupling.dcd_dx == 0:
            raise NumericalError("drive is off: no calibration tone")
    if scn_low.values.get("drive") != scn_high.values.get("drive"):
        raise ConfigError("low- and high-power scenarios must use the identical drive")
    seed = _require_seed(scn_low)
    nu_d = scn_low.drive.omega_drive / TWO_PI
    results = {}
    for label, scn, idx in (("low", scn_low, 0), ("high", scn_high, 1)):
        p = scn.cavity.power_incident
        spec = detected_spectrum(scn, p, scn.mode.temperature_bath, point_seed(seed, idx),
                                 scn.run("averages"), with_tone=True)
        geom = scn.geometry(p)
        resp = quadrature_responsivity(geom, scn.cavity_at(p))
        results[label] = (tone_power(spec, nu_d), resp, p)
    (pl, rl, Pl), (ph, rh, Ph) = results["low"], results["high"]
    gain = math.sqrt((ph / pl) * (rl / rh) ** 2) * scn_low.noise.gain_factor
    return {
        "gain_factor_estimate": gain,
        "tone_power_low_v2": pl,
        "tone_power_high_v2": ph,
        "power_low_w": Pl,
        "power_high_w": Ph,
        "responsivity_ratio_sq": (rh / rl) ** 2,
        "drive_hz": nu_d,
    }


def run_gaincal(scn_low: Scenario, scn_high: Scenario, out_dir) -> dict:
    started = time.perf_counter()
    summary = calibrate_gain_via_drive(scn_low, scn_high)
    with staged_output(out_dir) as tmp:
        write_report(tmp / "gaincal_report.txt", summary)
        write_manifest(tmp, "gaincal", scn_low, started, dict(summary, high_scenario=scn_high.serialize()))
    return summary


def run_fit(spectrum: SpectrumSeries, out_dir, window=None, sqrt_model: bool = False) -> dict:
    from .spectra import fit_sqrt_lorentzian

    started = time.perf_counter()
    fit = fit_sqrt_lorentzian(spectrum, window) if sqrt_model else fit_lorentzian(spectrum, window)
    report = fit.report()
    report["units"] = spectrum.units
    if fit.converged:
        report["integrated"] = integrate_lorentzian(fit)
    with staged_output(out_dir) as tmp:
        write_report(tmp / "fit_report.txt", report)
        model = fit.evaluate(fit.omega)
        write_csv(tmp / "fit_residuals.csv", ("nu_hz", "data", "model", "residual"),
                  np.column_stack([fit.omega / TWO_PI, model + fit.residuals, model, fit.residuals]))
        manifest = {"tool": "nanomech", "version": __version__, "command": "fit",
                    "outputs": inventory(tmp.iterdir()), "wall_clock_s": round(time.perf_counter() - started, 3)}
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    if not fit.converged:
        raise FitError(f"fit did not converge: {fit.message}")
    return report
