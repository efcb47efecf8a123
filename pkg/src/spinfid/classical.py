"""Classical spin dynamics and the time-averaged autocorrelation.

Spins are unit 3-vectors evolving under dS_m/dt = S_m x h_m, with the
local field h_m built from the coupling table.  The integrator is a
two-stage Gauss-Legendre collocation step (an implicit 4th-order
Runge-Kutta method).  Being symplectic, it conserves every quadratic
first integral of the flow -- each |S_m|^2 and the energy -- to the
stage-solver tolerance, so spins are never renormalized and drift
assertions stay meaningful.  Stage derivatives are solved by
fixed-point sweeps with Anderson(1) acceleration, started from a
polynomial extrapolation of the previous step's stages; everything
except the field GEMMs runs in fused numba kernels.

The infinite-temperature correlation C(t) is estimated per trajectory
as the sliding time average of Mx(tau) Mx(tau+t) over all available
windows (computed via FFT autocorrelation, which evaluates exactly that
sum), then averaged over independent realizations; each realization
draws its initial state from its own counter-based stream, so the
result is independent of batching.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ConfigError, NumericalError
from .lattice import CouplingTable, spin_label
from .series import CorrelationSeries
from .streams import stream

_SQ3 = np.sqrt(3.0)
_A11, _A12 = 0.25, 0.25 - _SQ3 / 6.0
_A21, _A22 = 0.25 + _SQ3 / 6.0, 0.25
_C1, _C2 = 0.5 - _SQ3 / 6.0, 0.5 + _SQ3 / 6.0


def _lagrange_weights(nodes, target):
    w = []
    for j, xj in enumerate(nodes):
        p = 1.0
        for k, xk in enumerate(nodes):
            if k != j:
                p *= (target - xk) / (xj - xk)
        w.append(p)
    return w

# stage-derivative extrapolation from the previous step's nodes
_LIN_W = np.array([_lagrange_weights([_C1, _C2], 1.0 + c) for c in (_C1, _C2)])
_CUB_W = np.array([_lagrange_weights([_C1 - 1.0, _C2 - 1.0, _C1, _C2], 1.0 + c)
                   for c in (_C1, _C2)])


@njit(cache=True)
def _k_stages(K, S, Y, dt):
    three, r2, n = Y.shape
    r = r2 // 2
    for a in range(3):
        for j in range(r):
            for i in range(n):
                k1 = K[a, j, i]
                k2 = K[a, r + j, i]
                s = S[a, j, i]
                Y[a, j, i] = s + dt * (_A11 * k1 + _A12 * k2)
                Y[a, r + j, i] = s + dt * (_A21 * k1 + _A22 * k2)


@njit(cache=True)
def _k_cross(Y, H, G):
    three, m, n = Y.shape
    for j in range(m):
        for i in range(n):
            y0 = Y[0, j, i]; y1 = Y[1, j, i]; y2 = Y[2, j, i]
            h0 = H[0, j, i]; h1 = H[1, j, i]; h2 = H[2, j, i]
            G[0, j, i] = y1 * h2 - y2 * h1
            G[1, j, i] = y2 * h0 - y0 * h2
            G[2, j, i] = y0 * h1 - y1 * h0


@njit(cache=True)
def _k_residual(G, K, r_prev, first):
    """res = G - K fused with the Anderson(1) bookkeeping.

    Overwrites r_prev with res and returns (max|res|, <res, dres>,
    <dres, dres>) where dres = res - previous res.
    """
    three, m, n = G.shape
    dmax = 0.0
    num = 0.0
    den = 0.0
    for a in range(3):
        for j in range(m):
            for i in range(n):
                res = G[a, j, i] - K[a, j, i]
                ar = abs(res)
                if ar > dmax:
                    dmax = ar
                if not first:
                    dr = res - r_prev[a, j, i]
                    num += res * dr
                    den += dr * dr
                r_prev[a, j, i] = res
    return dmax, num, den


@njit(cache=True)
def _k_accelerate(G, g_prev, K, beta):
    three, m, n = G.shape
    for a in range(3):
        for j in range(m):
            for i in range(n):
                g = G[a, j, i]
                K[a, j, i] = g - beta * (g - g_prev[a, j, i])
                g_prev[a, j, i] = g


@njit(cache=True)
def _k_copy_keep(G, g_prev, K):
    three, m, n = G.shape
    for a in range(3):
        for j in range(m):
            for i in range(n):
                g = G[a, j, i]
                K[a, j, i] = g
                g_prev[a, j, i] = g


@njit(cache=True)
def _k_predict(K, K_prev, W):
    """Extrapolate stage derivatives to the next step's nodes.

    Uses the previous and current stages as cubic interpolation nodes;
    current stages move into K_prev.
    """
    three, r2, n = K.shape
    r = r2 // 2
    for a in range(3):
        for j in range(r):
            for i in range(n):
                p1 = K_prev[a, j, i]
                p2 = K_prev[a, r + j, i]
                c1 = K[a, j, i]
                c2 = K[a, r + j, i]
                K_prev[a, j, i] = c1
                K_prev[a, r + j, i] = c2
                K[a, j, i] = W[0, 0] * p1 + W[0, 1] * p2 + W[0, 2] * c1 + W[0, 3] * c2
                K[a, r + j, i] = W[1, 0] * p1 + W[1, 1] * p2 + W[1, 2] * c1 + W[1, 3] * c2


@njit(cache=True)
def _k_predict_linear(K, K_prev, W):
    three, r2, n = K.shape
    r = r2 // 2
    for a in range(3):
        for j in range(r):
            for i in range(n):
                c1 = K[a, j, i]
                c2 = K[a, r + j, i]
                K_prev[a, j, i] = c1
                K_prev[a, r + j, i] = c2
                K[a, j, i] = W[0, 0] * c1 + W[0, 1] * c2
                K[a, r + j, i] = W[1, 0] * c1 + W[1, 1] * c2


@njit(cache=True)
def _k_advance(S, K, dt):
    """S += dt/2 (K1 + K2); returns max | |S_m| - 1 | after the update."""
    three, r2, n = K.shape
    r = r2 // 2
    half = 0.5 * dt
    drift = 0.0
    for j in range(r):
        for i in range(n):
            s0 = S[0, j, i] + half * (K[0, j, i] + K[0, r + j, i])
            s1 = S[1, j, i] + half * (K[1, j, i] + K[1, r + j, i])
            s2 = S[2, j, i] + half * (K[2, j, i] + K[2, r + j, i])
            S[0, j, i] = s0
            S[1, j, i] = s1
            S[2, j, i] = s2
            d = abs(np.sqrt(s0 * s0 + s1 * s1 + s2 * s2) - 1.0)
            if d > drift:
                drift = d
    return drift


def sample_random_state(n_sites: int, rng: np.random.Generator) -> np.ndarray:
    """(n_sites, 3) spins drawn independently and uniformly on the unit sphere."""
    if n_sites < 1:
        raise ConfigError("need at least one site")
    v = rng.normal(size=(n_sites, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def local_field(state: np.ndarray, table: CouplingTable, m: int) -> np.ndarray:
    """h_m = sum_n (Jx_mn Sx_n, Jy_mn Sy_n, Jz_mn Sz_n) over neighbors of m."""
    h = np.zeros(3)
    left = table.sites[:, 0] == m
    right = table.sites[:, 1] == m
    h += (table.values[left] * state[table.sites[left, 1]]).sum(axis=0)
    h += (table.values[right] * state[table.sites[right, 0]]).sum(axis=0)
    return h


def energy(state: np.ndarray, table: CouplingTable) -> float:
    """Classical Hamiltonian sum_{m<n} sum_a J^a_mn S^a_m S^a_n."""
    sm = state[table.sites[:, 0]]
    sn = state[table.sites[:, 1]]
    return float((table.values * sm * sn).sum())


class _GaussStepper:
    """Collocation stepper for a (3, R, N) spin batch with reused buffers."""

    def __init__(self, mats: np.ndarray, n_real: int, dt: float, tol: float,
                 max_sweeps: int = 60):
        self.mats = mats
        self.dt = dt
        self.tol = tol
        self.max_sweeps = max_sweeps
        self.n_real = n_real
        shape2 = (3, 2 * n_real, mats.shape[1])
        self.K = np.zeros(shape2)
        self.K_prev = np.zeros(shape2)
        self.Y = np.empty(shape2)
        self.h = np.empty(shape2)
        self.G = np.empty(shape2)
        self.g_prev = np.empty(shape2)
        self.r_prev = np.empty(shape2)
        self.steps_done = 0

    def step(self, spins: np.ndarray) -> float:
        """Advance the batch by dt in place; returns the spin-norm drift."""
        K, Y, G = self.K, self.Y, self.G
        if self.steps_done == 0:
            self._derivs_of(spins, G[:, :self.n_real])
            K[:, :self.n_real] = G[:, :self.n_real]
            K[:, self.n_real:] = G[:, :self.n_real]
        elif self.steps_done == 1:
            _k_predict_linear(K, self.K_prev, _LIN_W)
        else:
            _k_predict(K, self.K_prev, _CUB_W)
        converged = False
        dmax = np.inf
        for sweep in range(self.max_sweeps):
            _k_stages(K, spins, Y, self.dt)
            for a in range(3):
                np.matmul(Y[a], self.mats[a], out=self.h[a])
            _k_cross(Y, self.h, G)
            dmax, num, den = _k_residual(G, K, self.r_prev, sweep == 0)
            if dmax < self.tol:
                K[...] = G
                converged = True
                break
            if sweep == 0 or den <= 0.0:
                _k_copy_keep(G, self.g_prev, K)
            else:
                _k_accelerate(G, self.g_prev, K, num / den)
        if not converged:
            raise NumericalError(
                f"stage iteration stalled at residual {dmax:.2e} after "
                f"{self.max_sweeps} sweeps; reduce dt or loosen stage_tol")
        if self.steps_done == 0:
            self.K_prev[...] = K
        drift = _k_advance(spins, K, self.dt)
        self.steps_done += 1
        return drift

    def _derivs_of(self, spins: np.ndarray, out: np.ndarray) -> None:
        h = self.h[:, :spins.shape[1]]
        for a in range(3):
            np.matmul(spins[a], self.mats[a], out=h[a])
        _k_cross(spins, h, out)


def gauss_step(state: np.ndarray, table: CouplingTable, dt: float,
               tol: float = 1e-12) -> np.ndarray:
    """One collocation step for a single (n_sites, 3) state.

    Fields are recomputed self-consistently at both collocation nodes;
    |S_m| and the energy are conserved to the stage tolerance.
    """
    mats = table.coupling_matrices()
    stepper = _GaussStepper(mats, 1, dt, tol)
    spins = np.ascontiguousarray(state.T)[:, None, :].copy()
    stepper.step(spins)
    return spins[:, 0, :].T.copy()


@dataclass
class IntegrationParams:
    """Ensemble-run parameters, times in coupling units."""

    dt: float = 0.05
    duration: float = 200.0
    n_realizations: int = 10_000
    seed: int = 0
    t_max: float | None = None
    stage_tol: float = 1e-9
    batch_size: int = 512
    workers: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.duration < self.dt:
            raise ConfigError("duration must be at least one step")
        if self.n_realizations < 1:
            raise ConfigError("need at least one realization")
        if self.t_max is not None and self.t_max > self.duration / 2.0 + 1e-12:
            raise ConfigError("t_max beyond duration/2 would starve the lag average")


def _batch_energy(spins: np.ndarray, mats: np.ndarray) -> np.ndarray:
    e = np.zeros(spins.shape[1])
    for a in range(3):
        e += (spins[a] * (spins[a] @ mats[a])).sum(axis=1)
    return 0.5 * e


def lag_average(mx: np.ndarray, n_lag: int) -> np.ndarray:
    """Unbiased sliding average sum_i mx[i] mx[i+k] / (n-k) for k <= n_lag.

    mx has one column per trajectory; the FFT autocorrelation evaluates
    the same sums as the direct sliding window.
    """
    n = mx.shape[0]
    nfft = 1
    while nfft < 2 * n:
        nfft *= 2
    f = np.fft.rfft(mx, n=nfft, axis=0)
    ac = np.fft.irfft(f.real**2 + f.imag**2, n=nfft, axis=0)[:n_lag + 1]
    return ac / (n - np.arange(n_lag + 1))[:, None]


def _run_batch(mats, indices, params, n_steps, n_lag):
    n = mats.shape[1]
    r = len(indices)
    spins = np.empty((3, r, n))
    for j, idx in enumerate(indices):
        spins[:, j, :] = sample_random_state(n, stream(params.seed, idx)).T
    stepper = _GaussStepper(mats, r, params.dt, params.stage_tol)
    mx = np.empty((n_steps + 1, r))
    mx[0] = spins[0].sum(axis=1)
    e0 = _batch_energy(spins, mats)
    norm_drift = 0.0
    for k in range(n_steps):
        norm_drift = max(norm_drift, stepper.step(spins))
        mx[k + 1] = spins[0].sum(axis=1)
    e1 = _batch_energy(spins, mats)
    if not np.isfinite(mx).all() or not np.isfinite(e1).all():
        raise NumericalError("trajectory produced non-finite values; reduce dt")
    lag = lag_average(mx, n_lag)
    return (lag.sum(axis=1), (lag**2).sum(axis=1), lag.mean(axis=1),
            e0, e1, norm_drift)


def classical_correlation(table: CouplingTable, params: IntegrationParams) -> CorrelationSeries:
    """Ensemble estimate of the normalized autocorrelation of Mx.

    Returns raw and normalized series with per-point standard errors
    over realizations, plus per-batch mean curves in group_values for
    resampling-based error propagation.  Energy and spin-norm drift are
    checked per realization against the conservation budget and the
    observed maxima are reported in meta.
    """
    if not table.classical:
        raise ConfigError("classical dynamics needs a classical-tagged table")
    mats = table.coupling_matrices()
    n_steps = int(round(params.duration / params.dt))
    t_max = params.duration / 2.0 if params.t_max is None else params.t_max
    n_lag = min(int(round(t_max / params.dt)), n_steps)
    n_real = params.n_realizations

    batches = []
    start = 0
    while start < n_real:
        stop = min(start + params.batch_size, n_real)
        batches.append(np.arange(start, stop))
        start = stop

    if params.workers > 1:
        with ThreadPoolExecutor(max_workers=params.workers) as pool:
            results = list(pool.map(
                lambda idx: _run_batch(mats, idx, params, n_steps, n_lag), batches))
    else:
        results = [_run_batch(mats, idx, params, n_steps, n_lag) for idx in batches]

    total = np.zeros(n_lag + 1)
    total_sq = np.zeros(n_lag + 1)
    groups = []
    e_drift_abs = 0.0
    e_drift_rel = 0.0
    norm_drift = 0.0
    j_rms = float(np.sqrt((table.values**2).sum(axis=1).mean())) if table.n_pairs else 0.0
    e_floor = 1e-8 * table.spec.n_sites * j_rms
    for s1, s2, gmean, e0, e1, nd in results:
        total += s1
        total_sq += s2
        groups.append(gmean)
        de = np.abs(e1 - e0)
        e_drift_abs = max(e_drift_abs, float(de.max()))
        rel = de / np.maximum(np.abs(e0), 1e-2 * table.spec.n_sites * j_rms + 1e-300)
        e_drift_rel = max(e_drift_rel, float(rel.max()))
        norm_drift = max(norm_drift, nd)
        bad = de > np.maximum(1e-6 * np.abs(e0), e_floor)
        if bad.any():
            raise NumericalError(
                f"energy drift {de[bad].max():.3e} exceeds the conservation budget; "
                "reduce dt or tighten stage_tol")
    if norm_drift > 1e-7:
        raise NumericalError(f"spin-norm drift {norm_drift:.3e} exceeds 1e-7")

    raw = total / n_real
    if n_real > 1:
        var = np.maximum(total_sq - n_real * raw**2, 0.0) / (n_real - 1)
        stderr_raw = np.sqrt(var / n_real)
    else:
        stderr_raw = np.zeros_like(raw)
    if raw[0] <= 0:
        raise NumericalError("raw C(0) is not positive")
    times = np.arange(n_lag + 1) * params.dt
    meta = {
        "method": "classical",
        "spin": spin_label(table.two_s),
        "dt": repr(params.dt),
        "duration": repr(params.duration),
        "realizations": str(n_real),
        "seed": str(params.seed),
        "stage_tol": repr(params.stage_tol),
        "table_hash": table.content_hash(),
        "max_energy_drift_abs": f"{e_drift_abs:.6e}",
        "max_energy_drift_rel": f"{e_drift_rel:.6e}",
        "max_norm_drift": f"{norm_drift:.6e}",
    }
    return CorrelationSeries(
        times=times, values=raw / raw[0], stderr=stderr_raw / raw[0], raw=raw,
        normalization=float(raw[0]), meta=meta, group_values=np.array(groups))
