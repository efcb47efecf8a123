"""Normalization, long-time tail fits, unit conversion and series comparison.

The long-time decay of the autocorrelation is fit to the generic form
A exp(-gamma t) cos(omega t + phi) on the linear scale (a log transform
would be singular at the cosine zeros).  The default fit window starts
at the global minimum of C -- the first deep lobe, which already sits
in the asymptotic regime -- and ends where the smoothed envelope of |C|
drops below five times the median standard error (or at the end of the
series when it is noise-free); the chosen window is reported in the
result.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import savgol_filter

from .errors import ConfigError, FitConvergenceError
from .lattice import DipolarConstants
from .series import CorrelationSeries


def normalize(series: CorrelationSeries) -> CorrelationSeries:
    """Scale so C(0) = 1; idempotent, stderr scales identically."""
    c0 = series.values[0]
    if c0 <= 0:
        raise ConfigError("cannot normalize: C(0) <= 0")
    return CorrelationSeries(
        times=series.times, values=series.values / c0, stderr=series.stderr / c0,
        raw=series.raw, normalization=series.normalization * c0,
        meta=dict(series.meta), group_values=series.group_values)


def second_moment(series: CorrelationSeries, stencil: int = 2) -> float:
    """-C''(0) by symmetric finite differences using C(-t) = C(t).

    Five-point formula on the first stencil+1 points; requires a
    uniform grid with at least three points before the first extremum.
    """
    c = series.values
    if abs(c[0] - 1.0) > 1e-9:
        raise ConfigError("second_moment expects a normalized series")
    dts = np.diff(series.times[:stencil + 2])
    if np.ptp(dts) > 1e-9 * dts[0]:
        raise ConfigError("second_moment needs a uniform grid near t=0")
    d = np.diff(c)
    turns = np.nonzero(d[:-1] * d[1:] < 0)[0]
    first_ext = int(turns[0]) + 1 if len(turns) else len(c) - 1
    if first_ext < 3:
        raise ConfigError("grid too coarse: fewer than 3 points before the first extremum")
    dt = float(dts[0])
    return float((30.0 * c[0] - 32.0 * c[1] + 2.0 * c[2]) / (12.0 * dt * dt))


@dataclass
class TailFit:
    """Parameters of A exp(-gamma t) cos(omega t + phi) over [t_lo, t_hi].

    rms_residual is the window rms of (C - model) relative to the
    window rms of C, so values ~1 mean the model does not describe the
    data.  units records whether gamma/omega are in coupling units or
    physical ms^-1 / rad ms^-1.
    """

    amplitude: float
    gamma: float
    omega: float
    phase: float
    t_lo: float
    t_hi: float
    rms_residual: float
    units: str = "coupling"

    def model(self, t):
        return self.amplitude * np.exp(-self.gamma * np.asarray(t)) * np.cos(
            self.omega * np.asarray(t) + self.phase)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _smoothed(series: CorrelationSeries) -> np.ndarray:
    n = len(series.values)
    win = min(21, n - 1 if (n - 1) % 2 else n - 2)
    if win < 5 or float(series.stderr.max()) == 0.0:
        return series.values
    return savgol_filter(series.values, win, 3)


def _extrema_indices(y: np.ndarray) -> np.ndarray:
    d = np.diff(y)
    return np.nonzero(d[:-1] * d[1:] < 0)[0] + 1


def default_fit_window(series: CorrelationSeries) -> tuple[float, float]:
    """Automatic tail window: global minimum of C to the noise floor."""
    smooth = _smoothed(series)
    start = int(np.argmin(smooth))
    ext = _extrema_indices(smooth)
    ext = ext[ext > start]
    floor = 5.0 * float(np.median(series.stderr))
    stop = len(smooth) - 1
    if floor > 0.0:
        count = 0
        for idx in ext:
            count += 1
            if abs(smooth[idx]) < floor and count >= 2:
                stop = int(idx)
                break
    return float(series.times[start]), float(series.times[stop])


def fit_long_time_tail(series: CorrelationSeries, window=None,
                       init_hint=None) -> TailFit:
    """Damped-cosine least squares with automatic starts.

    omega starts from the mean extremum spacing, gamma from the
    log-slope of the extremum envelope, A and phi from the first
    windowed extremum; the fit is repeated over +-20% perturbations of
    (gamma, omega) and the lowest-residual solution wins.
    """
    if window is None:
        window = default_fit_window(series)
    t_lo, t_hi = window
    sel = (series.times >= t_lo - 1e-12) & (series.times <= t_hi + 1e-12)
    t = series.times[sel]
    c = series.values[sel]
    if len(t) < 8:
        raise FitConvergenceError(f"window [{t_lo:g}, {t_hi:g}] has too few points")
    smooth = _smoothed(series)[sel]
    ext = _extrema_indices(smooth)
    if len(ext) + (1 if _is_extremum_at_edge(series, t_lo) else 0) < 3:
        raise FitConvergenceError(
            f"window [{t_lo:g}, {t_hi:g}] contains fewer than 3 extrema")
    ext_t = t[ext]
    ext_v = smooth[ext]
    if _is_extremum_at_edge(series, t_lo):
        ext_t = np.concatenate([[t[0]], ext_t])
        ext_v = np.concatenate([[smooth[0]], ext_v])

    if init_hint is not None:
        gamma0, omega0 = init_hint
    else:
        omega0 = math.pi / float(np.diff(ext_t).mean())
        env = np.maximum(np.abs(ext_v), 1e-12)
        gamma0 = max(float(-np.polyfit(ext_t, np.log(env), 1)[0]), 1e-3)
    v0, t0 = float(ext_v[0]), float(ext_t[0])
    phi0 = -omega0 * t0 + (0.0 if v0 > 0 else math.pi)
    phi0 = (phi0 + math.pi) % (2.0 * math.pi) - math.pi
    amp0 = abs(v0) * math.exp(min(gamma0 * t0, 50.0))

    def residuals(p):
        a, g, om, ph = p
        return a * np.exp(-g * t) * np.cos(om * t + ph) - c

    best = None
    for fg in (1.0, 0.8, 1.2):
        for fo in (1.0, 0.95, 1.05):
            try:
                r = least_squares(residuals, [amp0, gamma0 * fg, omega0 * fo, phi0],
                                  method="lm", max_nfev=4000)
            except Exception:
                continue
            if r.x[1] <= 0:
                continue
            if best is None or r.cost < best.cost:
                best = r
    if best is None:
        raise FitConvergenceError(
            f"no converged fit in window [{t_lo:g}, {t_hi:g}] "
            f"(starts gamma={gamma0:.3g}, omega={omega0:.3g})")
    a, g, om, ph = best.x
    if om < 0:
        om, ph = -om, -ph
    if a < 0:
        a, ph = -a, ph + math.pi
    ph = (ph + math.pi) % (2.0 * math.pi) - math.pi
    model = a * np.exp(-g * t) * np.cos(om * t + ph)
    scale = float(np.sqrt((c**2).mean()))
    rms = float(np.sqrt(((c - model)**2).mean())) / max(scale, 1e-300)
    return TailFit(amplitude=float(a), gamma=float(g), omega=float(om),
                   phase=float(ph), t_lo=float(t_lo), t_hi=float(t_hi),
                   rms_residual=rms)


def _is_extremum_at_edge(series: CorrelationSeries, t_lo: float) -> bool:
    smooth = _smoothed(series)
    i = int(np.searchsorted(series.times, t_lo - 1e-12))
    return 0 < i < len(smooth) - 1 and (
        (smooth[i] - smooth[i - 1]) * (smooth[i + 1] - smooth[i]) < 0)


def to_physical_units(fit: TailFit, constants: DipolarConstants) -> TailFit:
    """Convert gamma to ms^-1 and omega to rad/ms via the coupling rate."""
    if fit.units != "coupling":
        raise ConfigError("fit is not in coupling units")
    rate = constants.rate_per_ms
    return TailFit(amplitude=fit.amplitude, gamma=fit.gamma * rate,
                   omega=fit.omega * rate, phase=fit.phase,
                   t_lo=fit.t_lo / rate, t_hi=fit.t_hi / rate,
                   rms_residual=fit.rms_residual, units="invms")


def from_physical_units(fit: TailFit, constants: DipolarConstants) -> TailFit:
    if fit.units != "invms":
        raise ConfigError("fit is not in physical units")
    rate = constants.rate_per_ms
    return TailFit(amplitude=fit.amplitude, gamma=fit.gamma / rate,
                   omega=fit.omega / rate, phase=fit.phase,
                   t_lo=fit.t_lo * rate, t_hi=fit.t_hi * rate,
                   rms_residual=fit.rms_residual, units="coupling")


@dataclass
class ComparisonReport:
    """Pointwise agreement metrics between two series on a common grid."""

    t_lo: float
    t_hi: float
    n_points: int
    max_abs_diff: float
    rms_diff: float
    max_z: float
    delta_gamma: float | None = None
    delta_omega: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def compare_series(a: CorrelationSeries, b: CorrelationSeries, window=None,
                   fit_a: TailFit | None = None,
                   fit_b: TailFit | None = None) -> ComparisonReport:
    """Resample b onto a's grid over the overlapping window and compare."""
    lo = max(a.times[0], b.times[0])
    hi = min(a.times[-1], b.times[-1])
    if window is not None:
        lo, hi = max(lo, window[0]), min(hi, window[1])
    if hi <= lo:
        raise ConfigError("series windows do not overlap")
    sel = (a.times >= lo - 1e-12) & (a.times <= hi + 1e-12)
    t = a.times[sel]
    va = a.values[sel]
    vb = np.interp(t, b.times, b.values)
    se = np.hypot(a.stderr[sel], np.interp(t, b.times, b.stderr))
    diff = np.abs(va - vb)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / se, np.where(diff > 0, np.inf, 0.0))
    return ComparisonReport(
        t_lo=float(t[0]), t_hi=float(t[-1]), n_points=int(len(t)),
        max_abs_diff=float(diff.max()), rms_diff=float(np.sqrt((diff**2).mean())),
        max_z=float(z.max()),
        delta_gamma=None if fit_a is None or fit_b is None else float(fit_a.gamma - fit_b.gamma),
        delta_omega=None if fit_a is None or fit_b is None else float(fit_a.omega - fit_b.omega))
