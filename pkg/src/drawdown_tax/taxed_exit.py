"""Exit and tax identities for an arbitrary piecewise-constant tax strategy.

A strategy ``gamma`` is indexed by the *untaxed* running maximum of X.  The
taxed running maximum started from ``x`` is ``gamma_bar_x(z) = x + int_x^z
(1 - gamma)``; both it and its inverse are piecewise affine and evaluated
exactly.

Each identity has two evaluation routes.  ``method="quadrature"`` integrates
W'/W(xi_bar(.)) numerically with adaptive Gauss-Kronrod; ``method="closed"``
(linear xi only) uses the log-shortcut for the inner integral.  ``"auto"``
picks the closed route whenever it exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .drawdown import DrawdownFn, DrawdownKernel
from .errors import DomainError
from .levy_models import ScaleFn
from .quadrature import exp_weighted_integral, integrate

__all__ = [
    "TaxStrategy",
    "gamma_bar",
    "gamma_bar_inv",
    "exit_laplace",
    "tax_return_to_barrier",
    "tax_return",
    "upper_bound",
    "TAIL_EPS",
]

TAIL_EPS = 1e-14


@dataclass(frozen=True)
class TaxStrategy:
    """Right-continuous piecewise-constant gamma: [0, inf) -> [gamma1, gamma2].

    ``values[i]`` applies on ``[breakpoints[i-1], breakpoints[i])`` with the
    conventions ``breakpoints[-1] = 0`` and ``breakpoints[n] = inf``.
    """

    gamma1: float
    gamma2: float
    breakpoints: tuple = ()
    values: tuple = (0.0,)

    def __post_init__(self):
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        problems = self.problems()
        if problems:
            raise DomainError("; ".join(problems))
        # cumulative int_0^{b_i} (1 - gamma) at each breakpoint
        knots = np.array((0.0,) + self.breakpoints)
        slopes = 1.0 - np.array(self.values)
        cum = np.concatenate([[0.0], np.cumsum(slopes[:-1] * np.diff(knots))])
        object.__setattr__(self, "_knots", knots)
        object.__setattr__(self, "_slopes", slopes)
        object.__setattr__(self, "_cum", cum)

    def problems(self):
        out = []
        g1, g2 = self.gamma1, self.gamma2
        if not (0.0 <= g1 <= g2 < 1.0):
            out.append(f"need 0 <= gamma1 <= gamma2 < 1 (got gamma1={g1}, gamma2={g2})")
        if len(self.values) != len(self.breakpoints) + 1:
            out.append("a strategy needs exactly one more value than breakpoints")
        bp = np.array(self.breakpoints)
        if len(bp) and (np.any(np.diff(bp) <= 0) or bp[0] <= 0 or not np.all(np.isfinite(bp))):
            out.append("strategy breakpoints must be finite, positive and strictly increasing")
        if any(not (g1 - 1e-15 <= v <= g2 + 1e-15) for v in self.values):
            out.append("every strategy value must lie in [gamma1, gamma2]")
        return out

    @classmethod
    def constant(cls, gamma, gamma1=None, gamma2=None):
        return cls(gamma if gamma1 is None else gamma1,
                   gamma if gamma2 is None else gamma2, (), (gamma,))

    @property
    def is_constant(self):
        return len(set(self.values)) == 1

    def __call__(self, y):
        idx = np.searchsorted(self.breakpoints, np.asarray(y, dtype=float), side="right")
        out = np.asarray(self.values)[idx]
        return float(out) if np.ndim(out) == 0 else out

    def net_integral(self, z):
        """int_0^z (1 - gamma(y)) dy, exact."""
        z = np.asarray(z, dtype=float)
        i = np.searchsorted(self._knots, z, side="right") - 1
        i = np.clip(i, 0, len(self._knots) - 1)
        out = self._cum[i] + self._slopes[i] * (z - self._knots[i])
        return float(out) if np.ndim(out) == 0 else out

    def net_integral_inv(self, v):
        """Inverse of ``net_integral`` on [0, inf)."""
        v = np.asarray(v, dtype=float)
        i = np.searchsorted(self._cum, v, side="right") - 1
        i = np.clip(i, 0, len(self._cum) - 1)
        out = self._knots[i] + (v - self._cum[i]) / self._slopes[i]
        return float(out) if np.ndim(out) == 0 else out

    def restricted_breaks(self, lo, hi):
        return [b for b in self.breakpoints if lo < b < hi]


def gamma_bar(s: TaxStrategy, x, z):
    """x + int_x^z (1 - gamma(y)) dy for z >= x >= 0."""
    z = np.asarray(z, dtype=float)
    if x < 0 or np.any(z < x):
        raise DomainError("gamma_bar needs z >= x >= 0")
    out = np.clip(x + (s.net_integral(z) - s.net_integral(x)), x, z)
    return float(out) if np.ndim(out) == 0 else out


def gamma_bar_inv(s: TaxStrategy, x, v):
    """The unique z >= x with gamma_bar(s, x, z) = v."""
    v = np.asarray(v, dtype=float)
    if x < 0 or np.any(v < x):
        raise DomainError("gamma_bar_inv needs v >= x >= 0")
    out = s.net_integral_inv(s.net_integral(x) + (v - x))
    out = np.maximum(out, x)
    return float(out) if np.ndim(out) == 0 else out


def upper_bound(sf: ScaleFn, gamma2: float) -> float:
    """gamma2 / Phi(q): bound on every tax return with rates in [gamma1, gamma2]."""
    return gamma2 / sf.phi_q


def _resolve(method, kernel):
    if method not in ("auto", "closed", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    if method == "closed" and not kernel.linear:
        raise ValueError("the closed-form route needs a linear draw-down function")
    return "closed" if (method == "auto" and kernel.linear) or method == "closed" else "quadrature"


def _check_start(kernel, x):
    if not x >= 0:
        raise DomainError("initial surplus x must be >= 0")
    kernel.shifted(x)  # raises when xi_bar(x) is singular


def _taxed_pieces(s: TaxStrategy, x, a):
    """Taxed-level intervals [y_i, y_{i+1}] inside [x, a] with the gamma active on each."""
    images = [gamma_bar(s, x, b) for b in s.breakpoints if b > x]
    edges = [x] + [y for y in images if y < a] + [a]
    rates = [s(gamma_bar_inv(s, x, 0.5 * (lo + hi))) if hi > lo else s(x)
             for lo, hi in zip(edges[:-1], edges[1:])]
    return edges, rates


def exit_laplace(sf: ScaleFn, s: TaxStrategy, f: DrawdownFn, x, a, method="auto"):
    """E_x[exp(-q tau_a^+); tau_a^+ < tau_xi^gamma] for the taxed surplus."""
    if not (0 <= x <= a):
        raise DomainError("exit_laplace needs 0 <= x <= a")
    kernel = DrawdownKernel(sf, f)
    _check_start(kernel, x)
    if x == a:
        return 1.0
    edges, rates = _taxed_pieces(s, x, a)
    if _resolve(method, kernel) == "closed":
        logs = kernel.log_w(np.array(edges))
        total = float(np.sum(np.diff(logs) / (1.0 - np.array(rates)))) / (1.0 - f.k)
    else:
        def integrand(y):
            gam = s(gamma_bar_inv(s, x, y))
            return kernel.rate(y) / (1.0 - gam)

        total = integrate(integrand, x, a, breaks=edges[1:-1], epsabs=1e-13, epsrel=1e-12)
    return math.exp(-total)


def _discounted_running_max_tax(kernel, s, x, m_end, method):
    """int_x^{m_end} gamma(m) exp(-int_x^m rate(gamma_bar_x(t)) dt) dm."""
    if m_end <= x or s.gamma2 == 0.0:
        return 0.0
    breaks = s.restricted_breaks(x, m_end)
    if _resolve(method, kernel) == "closed":
        knots = np.array([x] + breaks)
        knot_y = gamma_bar(s, x, knots)
        knot_logw = kernel.log_w(knot_y)
        seg_gamma = np.array([s(0.5 * (lo + hi)) for lo, hi in
                              zip(knots, list(knots[1:]) + [knots[-1] + 1.0])])
        seg_r = np.diff(knot_logw) / ((1.0 - seg_gamma[:-1]) * (1.0 - kernel.f.k))
        seg_start = np.concatenate([[0.0], np.cumsum(seg_r)])

        def weight(m):
            m = np.asarray(m, dtype=float)
            i = np.clip(np.searchsorted(knots, m, side="right") - 1, 0, len(knots) - 1)
            y = gamma_bar(s, x, m)
            r = seg_start[i] + (kernel.log_w(y) - knot_logw[i]) / (
                (1.0 - seg_gamma[i]) * (1.0 - kernel.f.k))
            return s(m) * np.exp(-r)

        return integrate(weight, x, m_end, breaks=breaks, epsabs=1e-13, epsrel=1e-11)

    value, _ = exp_weighted_integral(
        lambda m: kernel.rate(gamma_bar(s, x, m)), s, x, m_end,
        breaks=breaks, epsabs=1e-13, epsrel=1e-11,
    )
    return value


def tax_return_to_barrier(sf: ScaleFn, s: TaxStrategy, f: DrawdownFn, x, a, method="auto"):
    """Expected discounted tax paid before min(tau_a^+, tau_xi^gamma)."""
    if not (0 <= x <= a):
        raise DomainError("tax_return_to_barrier needs 0 <= x <= a")
    kernel = DrawdownKernel(sf, f)
    _check_start(kernel, x)
    return _discounted_running_max_tax(kernel, s, x, gamma_bar_inv(s, x, a), method)


def truncation_horizon(sf: ScaleFn, x, scale=1.0, rate_factor=1.0):
    """Point past which ``scale * exp(-rate_factor * Phi(q) (y - x))`` is below TAIL_EPS."""
    return x + math.log(max(scale, TAIL_EPS) / TAIL_EPS) / (rate_factor * sf.phi_q)


def tax_return(sf: ScaleFn, s: TaxStrategy, f: DrawdownFn, x, method="auto"):
    """Expected discounted tax paid until the draw-down time, started from x."""
    kernel = DrawdownKernel(sf, f)
    _check_start(kernel, x)
    if s.gamma2 == 0.0:
        return 0.0
    m_end = truncation_horizon(sf, x, s.gamma2)
    return _discounted_running_max_tax(kernel, s, x, m_end, method)
