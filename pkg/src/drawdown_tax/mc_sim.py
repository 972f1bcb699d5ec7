"""Monte-Carlo simulation of the taxed surplus and its draw-down time.

Brownian paths are stepped with Gaussian increments.  Within a step the
running maximum is drawn exactly from the Brownian-bridge law and the
draw-down level is tested with the bridge crossing probability, so the
step length only controls how often the (moving) level is refreshed.  The
step is ``((X - L)/(c sigma))^2`` clamped to ``[dt, dt_max]``, where ``L`` is
the current draw-down level: long steps far from the level, ``dt`` close to
it.  Times inside a step (new maxima, barrier hits) use the conditional mean
of the bridge first-passage time, which is linear in the level.

Cramer-Lundberg paths are simulated event by event: between claims the
surplus climbs at rate p, so maxima, tax and barrier hits are exact, and the
draw-down level can only be crossed at a claim.

Every step or claim consumes one Philox block keyed by (seed, path, step).
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numba
import numpy as np
from numba import njit, prange

from .drawdown import DrawdownFn, LinearDrawdown, TabulatedDrawdown
from .errors import DomainError
from .levy_models import BrownianDrift, CramerLundberg, LevyModel
from .rng import uniforms4
from .taxed_exit import TaxStrategy, gamma_bar_inv

__all__ = [
    "SimConfig",
    "McEstimate",
    "PathRecord",
    "simulate_taxed_path",
    "simulate_paths",
    "estimate_exit",
    "estimate_tax",
    "default_horizon",
]

if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    # try OpenMP before TBB; the TBB probe warns on older TBB installs
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

CENSOR_LEVEL = 1e-6
TWO_PI = 2.0 * math.pi


def default_horizon(q):
    """Smallest horizon with exp(-q horizon) <= 1e-6."""
    return math.log(1.0 / CENSOR_LEVEL) / q


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``dt`` is the finest Brownian step (used next to the draw-down level and
    the barrier); ``dt_max`` caps the step far from them.  ``horizon=None``
    picks ``default_horizon(q)``.
    """

    n_paths: int = 100_000
    dt: float = 1e-4
    horizon: float | None = None
    seed: int = 0
    barrier: float | None = None
    dt_max: float = 1.0
    step_scale: float = 4.0

    def __post_init__(self):
        problems = []
        if not (isinstance(self.n_paths, (int, np.integer)) and self.n_paths >= 1):
            problems.append("n_paths must be an integer >= 1")
        if not self.dt > 0:
            problems.append("dt must be > 0")
        if not self.dt_max >= self.dt:
            problems.append("dt_max must be >= dt")
        if self.horizon is not None and not self.horizon > 0:
            problems.append("horizon must be > 0")
        if not 0 <= self.seed < 2 ** 64:
            problems.append("seed must fit in 64 bits")
        if not self.step_scale > 0:
            problems.append("step_scale must be > 0")
        if problems:
            raise DomainError("; ".join(problems))


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_effective: int
    truncated_fraction: float


@dataclass(frozen=True)
class PathRecord:
    """One simulated path: stopping times (inf when not reached) and discounted tax."""

    tau_a: float
    tau_xi: float
    tax: float
    censored: bool


# --------------------------------------------------------------------------
# compiled helpers


@njit(cache=True)
def _xi_bar(u, kind, k, d, tx, tv, ts):
    if kind == 0:
        return (1.0 - k) * u + d
    n = tx.shape[0]
    if u < tx[0] or u > tx[n - 1]:
        return np.nan
    i = np.searchsorted(tx, u, side="right") - 1
    if i >= n - 1:
        i = n - 2
    h = tx[i + 1] - tx[i]
    t = (u - tx[i]) / h
    t2 = t * t
    t3 = t2 * t
    val = ((2 * t3 - 3 * t2 + 1) * tv[i] + (t3 - 2 * t2 + t) * h * ts[i]
           + (-2 * t3 + 3 * t2) * tv[i + 1] + (t3 - t2) * h * ts[i + 1])
    return u - val


@njit(cache=True)
def _net(z, knots, cum, slopes):
    i = np.searchsorted(knots, z, side="right") - 1
    if i < 0:
        i = 0
    return cum[i] + slopes[i] * (z - knots[i])


@njit(cache=True)
def _level(m, x0, net_x0, kind, k, d, tx, tv, ts, knots, cum, slopes):
    """Draw-down level for X when the untaxed maximum is m."""
    ubar = x0 + _net(m, knots, cum, slopes) - net_x0
    return m - _xi_bar(ubar, kind, k, d, tx, tv, ts)


@njit(cache=True)
def _tax(lo, hi, t_ref, x_ref, beta, q, knots, values):
    """sum over gamma pieces of int_lo^hi gamma(m) exp(-q (t_ref + beta (m - x_ref))) dm."""
    total = 0.0
    n = knots.shape[0]
    i = np.searchsorted(knots, lo, side="right") - 1
    if i < 0:
        i = 0
    a = lo
    while a < hi:
        b = hi
        if i + 1 < n and knots[i + 1] < hi:
            b = knots[i + 1]
        g = values[i]
        if g > 0.0:
            rate = q * beta
            start = math.exp(-q * (t_ref + beta * (a - x_ref)))
            if rate * (b - a) < 1e-12:
                total += g * start * (b - a)
            else:
                total += g * start * (-math.expm1(-rate * (b - a))) / rate
        a = b
        i += 1
    return total


@njit(cache=True, parallel=True)
def _brownian_paths(mu, sigma, q, x0, has_barrier, a_x, horizon, dt, dt_max, c_step,
                    seed, first_path, n, kind, k, d, tx, tv, ts, knots, cum, slopes, values,
                    out_tau_a, out_tau_xi, out_tax, out_flag):
    net_x0 = _net(x0, knots, cum, slopes)
    sig2 = sigma * sigma
    for j in prange(n):
        path = first_path + j
        t = 0.0
        xx = x0
        m = x0
        tax = 0.0
        step = 0
        tau_a = np.inf
        tau_xi = np.inf
        flag = 1  # 1 censored, 0 stopped, 2 left the tabulated range
        lev = _level(m, x0, net_x0, kind, k, d, tx, tv, ts, knots, cum, slopes)
        if not xx > lev:
            tau_xi = 0.0
            flag = 0
        while flag == 1 and t < horizon:
            dist = xx - lev
            if has_barrier and a_x - xx < dist:
                dist = a_x - xx
            h = (dist / (c_step * sigma)) ** 2
            if h < dt:
                h = dt
            if h > dt_max:
                h = dt_max
            if h > horizon - t:
                h = horizon - t
            u0, u1, u2, u3 = uniforms4(step, path, seed)
            step += 1
            z = math.sqrt(-2.0 * math.log(u0)) * math.cos(TWO_PI * u1)
            xn = xx + mu * h + sigma * math.sqrt(h) * z
            dx = xn - xx
            bmax = 0.5 * (xx + xn + math.sqrt(dx * dx - 2.0 * sig2 * h * math.log(u2)))
            lev_start = lev
            if bmax > m:
                # E[first passage to level y | bridge max] = h (y - x)/(2 bmax - x - xn)
                beta = h / (2.0 * bmax - xx - xn)
                if has_barrier and bmax >= a_x:
                    tax += _tax(m, a_x, t, xx, beta, q, knots, values)
                    tau_a = t + beta * (a_x - xx)
                    flag = 0
                    break
                tax += _tax(m, bmax, t, xx, beta, q, knots, values)
                m = bmax
                lev = _level(m, x0, net_x0, kind, k, d, tx, tv, ts, knots, cum, slopes)
                if np.isnan(lev):
                    flag = 2
                    break
            killed = False
            if xn <= lev:
                killed = True
            else:
                lref = lev_start if lev_start < lev else lev
                if xn > lref and xx > lref:
                    p = math.exp(-2.0 * (xx - lref) * (xn - lref) / (sig2 * h))
                    killed = u3 < p
                else:
                    killed = True
            t += h
            xx = xn
            if killed:
                tau_xi = t
                flag = 0
        out_tau_a[j] = tau_a
        out_tau_xi[j] = tau_xi
        out_tax[j] = tax
        out_flag[j] = flag


@njit(cache=True, parallel=True)
def _cl_paths(p, lam, mu_j, q, x0, has_barrier, a_x, horizon, seed, first_path, n,
              kind, k, d, tx, tv, ts, knots, cum, slopes, values,
              out_tau_a, out_tau_xi, out_tax, out_flag):
    net_x0 = _net(x0, knots, cum, slopes)
    beta = 1.0 / p
    for j in prange(n):
        path = first_path + j
        t = 0.0
        xx = x0
        m = x0
        tax = 0.0
        step = 0
        tau_a = np.inf
        tau_xi = np.inf
        flag = 1
        lev = _level(m, x0, net_x0, kind, k, d, tx, tv, ts, knots, cum, slopes)
        if not xx > lev:
            tau_xi = 0.0
            flag = 0
        while flag == 1 and t < horizon:
            u0, u1, u2, u3 = uniforms4(step, path, seed)
            step += 1
            wait = -math.log(u0) / lam
            censor = False
            if t + wait >= horizon:
                wait = horizon - t
                censor = True
            top = xx + p * wait
            if top > m:
                # climbing through new maxima from max(xx, m) at time t_s
                start = m if m > xx else xx
                t_s = t + (start - xx) * beta
                if has_barrier and top >= a_x:
                    tax += _tax(start, a_x, t_s, start, beta, q, knots, values)
                    tau_a = t_s + (a_x - start) * beta
                    flag = 0
                    break
                tax += _tax(start, top, t_s, start, beta, q, knots, values)
                m = top
                lev = _level(m, x0, net_x0, kind, k, d, tx, tv, ts, knots, cum, slopes)
                if np.isnan(lev):
                    flag = 2
                    break
            t += wait
            xx = top
            if censor:
                break
            xx -= -math.log(u1) / mu_j
            if xx < lev:
                tau_xi = t
                flag = 0
        out_tau_a[j] = tau_a
        out_tau_xi[j] = tau_xi
        out_tax[j] = tax
        out_flag[j] = flag


# --------------------------------------------------------------------------
# python front end


def _apply_thread_cap():
    cap = os.environ.get("DRAWDOWN_TAX_THREADS")
    if cap:
        numba.set_num_threads(max(1, min(int(cap), numba.config.NUMBA_NUM_THREADS)))


def _drawdown_args(f: DrawdownFn):
    empty = np.zeros(2)
    if isinstance(f, LinearDrawdown):
        return 0, float(f.k), float(f.d), empty, empty, empty
    if isinstance(f, TabulatedDrawdown):
        return 1, 0.0, 0.0, f.x, f.values, f.slopes
    raise TypeError(f"unsupported draw-down function {type(f).__name__}")


def _strategy_args(s: TaxStrategy):
    return (np.ascontiguousarray(s._knots), np.ascontiguousarray(s._cum),
            np.ascontiguousarray(s._slopes), np.asarray(s.values, dtype=float))


def simulate_paths(model: LevyModel, q, s: TaxStrategy, f: DrawdownFn, x0, cfg: SimConfig,
                   first_path=0, n=None):
    """Simulate ``n`` paths (default ``cfg.n_paths``); returns (tau_a, tau_xi, tax, censored)."""
    if not x0 > 0:
        raise DomainError("x0 must be > 0")
    if not q > 0:
        raise DomainError("simulation needs a discount rate q > 0")
    problems = model.problems()
    if problems:
        raise DomainError("; ".join(problems))
    n = cfg.n_paths if n is None else n
    horizon = default_horizon(q) if cfg.horizon is None else cfg.horizon
    has_barrier = cfg.barrier is not None
    if has_barrier:
        if cfg.barrier < x0:
            raise DomainError("barrier must be >= x0")
        a_x = gamma_bar_inv(s, x0, cfg.barrier)
    else:
        a_x = math.inf
    kind, k, d, tx, tv, ts = _drawdown_args(f)
    knots, cum, slopes, values = _strategy_args(s)
    tau_a = np.empty(n)
    tau_xi = np.empty(n)
    tax = np.empty(n)
    flag = np.empty(n, dtype=np.int64)
    _apply_thread_cap()
    common = (kind, k, d, tx, tv, ts, knots, cum, slopes, values, tau_a, tau_xi, tax, flag)
    if isinstance(model, BrownianDrift):
        _brownian_paths(model.mu, model.sigma, q, float(x0), has_barrier, float(a_x),
                        float(horizon), cfg.dt, cfg.dt_max, cfg.step_scale,
                        np.uint64(cfg.seed), first_path, n, *common)
    elif isinstance(model, CramerLundberg):
        _cl_paths(model.p, model.lam, model.mu_jump, q, float(x0), has_barrier, float(a_x),
                  float(horizon), np.uint64(cfg.seed), first_path, n, *common)
    else:
        raise TypeError(f"unsupported model {type(model).__name__}")
    if np.any(flag == 2):
        raise DomainError("a simulated taxed maximum left the range of the tabulated draw-down")
    return tau_a, tau_xi, tax, flag == 1


def simulate_taxed_path(model: LevyModel, q, s: TaxStrategy, f: DrawdownFn, x0, cfg: SimConfig,
                        path_index=0) -> PathRecord:
    """Simulate the single path ``path_index`` of the stream defined by ``cfg.seed``."""
    tau_a, tau_xi, tax, cens = simulate_paths(model, q, s, f, x0, cfg, path_index, 1)
    return PathRecord(float(tau_a[0]), float(tau_xi[0]), float(tax[0]), bool(cens[0]))


def _summarize(samples, censored):
    n = len(samples)
    mean = math.fsum(samples) / n
    if n > 1:
        var = math.fsum((samples - mean) ** 2) / (n - 1)
        stderr = math.sqrt(var / n)
    else:
        stderr = 0.0
    return McEstimate(mean, stderr, n, float(np.count_nonzero(censored)) / n)


def estimate_exit(model: LevyModel, q, s: TaxStrategy, f: DrawdownFn, x, a,
                  cfg: SimConfig) -> McEstimate:
    """MC estimate of E_x[exp(-q tau_a); tau_a < tau_xi] (``a`` on the taxed scale)."""
    if a < x:
        raise DomainError("barrier must be >= x")
    if a == x:
        return McEstimate(1.0, 0.0, cfg.n_paths, 0.0)
    run = SimConfig(cfg.n_paths, cfg.dt, cfg.horizon, cfg.seed, a, cfg.dt_max, cfg.step_scale)
    tau_a, tau_xi, _, censored = simulate_paths(model, q, s, f, x, run)
    hit = np.isfinite(tau_a) & (tau_a < tau_xi)
    samples = np.where(hit, np.exp(-q * np.where(hit, tau_a, 0.0)), 0.0)
    return _summarize(samples, censored)


def estimate_tax(model: LevyModel, q, s: TaxStrategy, f: DrawdownFn, x,
                 cfg: SimConfig) -> McEstimate:
    """MC estimate of the expected discounted tax paid until the draw-down time.

    With ``cfg.barrier`` set, tax stops at min(tau_a, tau_xi) instead.
    """
    _, _, tax, censored = simulate_paths(model, q, s, f, x, cfg)
    return _summarize(tax, censored)
