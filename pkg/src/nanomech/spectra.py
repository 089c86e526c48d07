"""PSD estimation and Lorentzian peak fitting."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .model import TWO_PI, DomainError


class NumericalError(RuntimeError):
    """A numerical procedure failed to produce a trustworthy result."""


class FitError(NumericalError):
    pass


@dataclass(frozen=True, eq=False)
class SpectrumSeries:
    """Single-sided, per-Hz PSD on a strictly increasing grid (Hz)."""

    frequencies: np.ndarray
    psd: np.ndarray
    units: str = "m^2/Hz"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        nu = np.asarray(self.frequencies, dtype=float)
        p = np.asarray(self.psd, dtype=float)
        if nu.ndim != 1 or nu.shape != p.shape or nu.size < 2:
            raise DomainError("frequencies and psd must be equal-length 1-D arrays")
        if np.any(np.diff(nu) <= 0):
            raise DomainError("frequency grid must be strictly increasing")
        object.__setattr__(self, "frequencies", nu)
        object.__setattr__(self, "psd", p)

    @property
    def df(self) -> float:
        return float(np.median(np.diff(self.frequencies)))

    def window(self, lo: float | None, hi: float | None) -> "SpectrumSeries":
        lo = -np.inf if lo is None else lo
        hi = np.inf if hi is None else hi
        sel = (self.frequencies >= lo) & (self.frequencies <= hi)
        if sel.sum() < 2:
            raise DomainError(f"window [{lo}, {hi}] Hz holds fewer than 2 bins")
        return SpectrumSeries(self.frequencies[sel], self.psd[sel], self.units, dict(self.metadata))


def welch_psd(trajectory, segment_length: int, overlap: float = 0.5, units: str = "m^2/Hz") -> SpectrumSeries:
    """Hann-windowed, mean-detrended Welch estimate of a trajectory's PSD."""
    x = np.asarray(trajectory.samples, dtype=float)
    segment_length = int(segment_length)
    if segment_length < 2 or segment_length > x.size:
        raise DomainError(
            f"segment_length {segment_length} incompatible with trajectory of {x.size} samples"
        )
    if not 0.0 <= overlap < 1.0:
        raise DomainError("overlap must lie in [0, 1)")
    noverlap = int(round(segment_length * overlap))
    fs = 1.0 / trajectory.dt
    f, p = signal.welch(
        x, fs=fs, window="hann", nperseg=segment_length, noverlap=noverlap,
        detrend="constant", scaling="density", return_onesided=True,
    )
    n_seg = 1 + (x.size - segment_length) // (segment_length - noverlap)
    meta = {"segments": int(n_seg), "segment_length": segment_length, "overlap": overlap,
            "seed": getattr(trajectory, "seed", None)}
    return SpectrumSeries(f, p, units=units, metadata=meta)


@dataclass(frozen=True, eq=False)
class LorentzianFit:
    """Fit of B + S0 / (1 + 4 (omega - omega_0)^2 / gamma^2); centre and width in rad/s."""

    center: float
    fwhm_gamma: float
    peak: float
    background: float
    covariance: np.ndarray
    converged: bool
    iterations: int
    model: str = "lorentzian"
    message: str = ""
    omega: np.ndarray | None = None
    residuals: np.ndarray | None = None

    @property
    def params(self) -> np.ndarray:
        return np.array([self.center, self.fwhm_gamma, self.peak, self.background])

    def evaluate(self, omega):
        return _MODELS[self.model](np.asarray(omega, dtype=float), self.params)[0]

    def report(self) -> dict:
        err = np.sqrt(np.clip(np.diag(self.covariance), 0, None))
        return {
            "model": self.model,
            "converged": self.converged,
            "iterations": self.iterations,
            "message": self.message or "ok",
            "center_rad_s": self.center,
            "center_hz": self.center / TWO_PI,
            "fwhm_gamma_rad_s": self.fwhm_gamma,
            "fwhm_hz": self.fwhm_gamma / TWO_PI,
            "peak": self.peak,
            "background": self.background,
            "center_err_rad_s": err[0],
            "fwhm_gamma_err_rad_s": err[1],
            "peak_err": err[2],
            "background_err": err[3],
        }


def lorentzian(omega, center, gamma, peak, background=0.0):
    return background + peak / (1.0 + 4.0 * (np.asarray(omega) - center) ** 2 / gamma**2)


def _lorentz_model(x, p):
    c, g, s, b = p
    u = 2.0 * (x - c) / g
    d = 1.0 / (1.0 + u * u)
    y = b + s * d
    jac = np.empty((x.size, 4))
    jac[:, 0] = 2.0 * s * u * d * d * (2.0 / g)
    jac[:, 1] = 2.0 * s * u * u * d * d / g
    jac[:, 2] = d
    jac[:, 3] = 1.0
    return y, jac


def _sqrt_lorentz_model(x, p):
    m, jm = _lorentz_model(x, p)
    if np.any(m <= 0):
        # outside the model's domain; the optimiser rejects such trials
        nan = np.full(x.size, np.nan)
        return nan, np.full(jm.shape, np.nan)
    y = np.sqrt(m)
    return y, jm / (2.0 * y)[:, None]


_MODELS = {"lorentzian": _lorentz_model, "sqrt_lorentzian": _sqrt_lorentz_model}


def _initial_guess(omega, power):
    # a short running mean keeps single noisy bins from posing as the peak
    k = max(1, power.size // 50)
    smooth = np.convolve(power, np.ones(k) / k, mode="same") if k > 1 else power
    i = int(np.argmax(smooth))
    background = float(np.median(power))
    peak = float(smooth[i] - background)
    half = background + peak / 2.0
    above = np.count_nonzero(smooth > half)
    d_omega = float(np.median(np.diff(omega)))
    gamma = max(above, 1) * d_omega
    return np.array([omega[i], gamma, peak, background])


def _gauss_newton(model, x, y, p0, scale, tol=1e-9, stat_tol=1e-3, max_iter=500):
    """Levenberg-damped Gauss-Newton in scaled parameters.

    Converged when the undamped Gauss-Newton step is below ``tol`` relative
    to each parameter (or its scale), or below ``stat_tol`` of each parameter's
    standard error; noisy, large-residual data only converge linearly and steps
    far inside the error bars change nothing. Returns (params, covariance,
    converged, iterations).
    """
    p = p0.astype(float).copy()
    y_fit, jac = model(x, p)
    r = y - y_fit
    ssr = float(r @ r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        js = jac * scale
        gn_step = np.linalg.lstsq(js, r, rcond=None)[0] * scale
        sigma = np.sqrt(np.clip(np.diag(_covariance(jac, r, x.size, scale)), 0, None))
        if np.all(np.abs(gn_step) <= np.maximum(tol * np.maximum(np.abs(p), scale), stat_tol * sigma)):
            trial = p + gn_step
            trial[1] = abs(trial[1])
            y_t, jac_t = model(x, trial)
            if np.all(np.isfinite(y_t)):
                p, jac, r = trial, jac_t, y - y_t
            return p, _covariance(jac, r, x.size, scale), True, it
        jtj = js.T @ js
        grad = js.T @ r
        diag = np.diag(np.diag(jtj)) + 1e-300
        while True:
            step = np.linalg.solve(jtj + lam * diag, grad) * scale
            trial = p + step
            trial[1] = abs(trial[1])
            y_t, jac_t = model(x, trial)
            r_t = y - y_t
            ssr_t = float(r_t @ r_t)
            if np.isfinite(ssr_t) and ssr_t <= ssr:
                p, jac, r, ssr = trial, jac_t, r_t, ssr_t
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
            if lam > 1e16:
                return p, _covariance(jac, r, x.size, scale), False, it
    return p, _covariance(jac, r, x.size, scale), False, max_iter


def _covariance(jac, r, n, scale):
    # inverted in scaled parameters so pinv does not truncate the small columns
    dof = max(n - jac.shape[1], 1)
    s2 = float(r @ r) / dof
    js = jac * scale
    try:
        return s2 * np.linalg.pinv(js.T @ js) * np.outer(scale, scale)
    except np.linalg.LinAlgError:
        return np.full((jac.shape[1],) * 2, np.nan)


def _fit(model_name, nu, y, window, p0=None):
    nu = np.asarray(nu, dtype=float)
    y = np.asarray(y, dtype=float)
    if window is not None:
        lo, hi = window
        sel = (nu >= lo) & (nu <= hi)
        nu, y = nu[sel], y[sel]
    if nu.size < 5:
        raise FitError("fit window holds fewer than 5 bins")
    omega = TWO_PI * nu
    power = y**2 if model_name == "sqrt_lorentzian" else y
    if p0 is None:
        p0 = _initial_guess(omega, power)
    amp = max(abs(p0[2]), abs(p0[3]), np.max(np.abs(power)), 1e-300)
    scale = np.array([p0[1], p0[1], amp, amp])
    model = _MODELS[model_name]
    p, cov, converged, it = _gauss_newton(model, omega, y, p0, scale)
    resid = y - model(omega, p)[0]
    messages = []
    if not converged:
        messages.append(f"not converged after {it} iterations")
    if p[2] < 0:
        messages.append("negative peak")
    if p[3] < -1e-6 * abs(p[2]):
        messages.append("negative background")
    if p[2] < 0:
        converged = False
    return LorentzianFit(
        center=float(p[0]), fwhm_gamma=float(abs(p[1])), peak=float(p[2]), background=float(p[3]),
        covariance=cov, converged=bool(converged), iterations=int(it), model=model_name,
        message="; ".join(messages), omega=omega, residuals=resid,
    )


def fit_lorentzian(spectrum: SpectrumSeries, window=None, p0=None) -> LorentzianFit:
    """Least-squares Lorentzian-plus-background fit over ``window`` = (lo_hz, hi_hz).

    Non-convergence and negative peaks are reported through ``converged`` and
    ``message``; they never raise.
    """
    return _fit("lorentzian", spectrum.frequencies, spectrum.psd, window, p0)


def fit_sqrt_lorentzian(amplitude_sweep, window=None, p0=None) -> LorentzianFit:
    """Fit sqrt(B + S0/(1 + 4 Delta^2/gamma^2)) to a driven amplitude sweep.

    ``amplitude_sweep`` is a SpectrumSeries-like object or a (frequencies_hz, amplitudes) pair.
    """
    if isinstance(amplitude_sweep, SpectrumSeries):
        nu, amp = amplitude_sweep.frequencies, amplitude_sweep.psd
    else:
        nu, amp = amplitude_sweep
    return _fit("sqrt_lorentzian", nu, amp, window, p0)


def integrate_lorentzian(fit: LorentzianFit) -> float:
    """Area under the peak, S0 * gamma / 4 (background excluded), in spectrum units x Hz."""
    if not fit.converged:
        raise FitError(f"cannot integrate an unconverged fit ({fit.message})")
    return fit.peak * fit.fwhm_gamma / 4.0
