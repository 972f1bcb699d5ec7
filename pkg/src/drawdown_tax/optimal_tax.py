"""Optimal tax rate: sign integrals G1/G2, case classification, switch points,
the optimal return function and its HJB residual.

The optimal control is a feedback rule on the current (taxed) running
maximum.  For a surplus-level rule h that is piecewise constant, the return
function is

    V_h(x) = int_x^inf h(u)/(1-h(u)) exp(-int_x^u rate(v)/(1-h(v)) dv) du

with rate(v) = W'/W(v - xi(v)).  Every case reduces to this formula with h
constant or switching once.  ``strategy_for_start`` converts the rule into a
strategy indexed by the untaxed running maximum, which is what
``tax_return`` and the simulator consume.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .drawdown import DrawdownFn, DrawdownKernel, Pattern, SignPattern, find_sign_change
from .errors import AssumptionViolated, DomainError, InconsistencyError
from .levy_models import ScaleFn
from .quadrature import exp_weighted_integral, integrate
from .taxed_exit import TAIL_EPS, TaxStrategy

__all__ = [
    "CaseLabel",
    "SolveReport",
    "HJBResidual",
    "G1",
    "G2",
    "classify_case",
    "find_switch_point",
    "solve",
    "solve_kernel",
    "optimal_value",
    "optimal_strategy",
    "strategy_for_start",
    "hjb_residual",
    "power_form_value",
]

N_PROBE = 256
ZERO_OFFSET = 1e-6  # x = 0+ is probed at ZERO_OFFSET / Phi(q)
G_TOL = 1e-10
FD_STEP = 1e-5
EPSABS = 1e-14
EPSREL = 1e-12


class CaseLabel(str, enum.Enum):
    I = "I"
    II = "II"
    III = "III"
    IV = "IV"
    V = "V"
    VI = "VI"


# --------------------------------------------------------------------------
# exponentially weighted integrals along the rate


def _decay(kernel, c, x, u):
    """exp(-c int_x^u rate), closed form for linear xi."""
    if kernel.linear:
        return np.exp(-c * (kernel.log_w(u) - kernel.log_w(x)) / (1.0 - kernel.f.k))
    return math.exp(-c * integrate(kernel.rate, x, u, epsabs=EPSABS, epsrel=EPSREL))


def _weighted(kernel, c, weight, x, end):
    """(int_x^end weight(u) exp(-c int_x^u rate) du, exp(-c int_x^end rate))."""
    if end <= x:
        return 0.0, 1.0
    if kernel.linear:
        lw_x = kernel.log_w(x)
        scale = c / (1.0 - kernel.f.k)

        def integrand(u):
            return weight(u) * np.exp(-scale * (kernel.log_w(u) - lw_x))

        total = integrate(integrand, x, end, epsabs=EPSABS, epsrel=EPSREL)
        return total, float(np.exp(-scale * (kernel.log_w(end) - lw_x)))
    total, r = exp_weighted_integral(lambda u: c * kernel.rate(u), weight, x, end,
                                     epsabs=EPSABS, epsrel=EPSREL)
    return total, math.exp(-r)


def _horizon(kernel, c, x, scale):
    return x + math.log(max(scale, TAIL_EPS) / TAIL_EPS) / (c * kernel.phi)


def _tail_g(kernel, gamma, x):
    c = 1.0 / (1.0 - gamma)
    end = _horizon(kernel, c, x, kernel.g_bound())
    return _weighted(kernel, c, kernel.g, x, end)[0]


def _tails(kernel, c, weight, points, end):
    """int_{p_i}^end weight(y) exp(-c int_{p_i}^y rate) dy for every sorted point p_i.

    Accumulated right to left over consecutive intervals, each scaled to its
    own left end, so no factor exp(+c int rate) ever appears.
    """
    points = np.asarray(points, dtype=float)
    out = np.empty(len(points))
    acc = _weighted(kernel, c, weight, points[-1], end)[0]
    out[-1] = acc
    for i in range(len(points) - 2, -1, -1):
        piece, decay = _weighted(kernel, c, weight, points[i], points[i + 1])
        acc = piece + decay * acc
        out[i] = acc
    return out


def _tail_g_many(kernel, gamma, points):
    c = 1.0 / (1.0 - gamma)
    end = _horizon(kernel, c, float(points[-1]), kernel.g_bound())
    return _tails(kernel, c, kernel.g, points, end)


def _constant_piece(kernel, gamma, x, b=math.inf):
    """(int_x^b gamma/(1-gamma) E du, E(x, b)) for a constant rule gamma."""
    if gamma == 0.0:
        return 0.0, (0.0 if math.isinf(b) else float(_decay(kernel, 1.0, x, b)))
    c = 1.0 / (1.0 - gamma)
    if math.isinf(b):
        end = _horizon(kernel, c, x, gamma * c)
        total, _ = _weighted(kernel, c, lambda u: np.ones_like(u), x, end)
        return gamma * c * total, 0.0
    total, e_end = _weighted(kernel, c, lambda u: np.ones_like(u), x, b)
    return gamma * c * total, e_end


def _check_gammas(gamma1, gamma2):
    if not (0.0 <= gamma1 <= gamma2 < 1.0):
        raise DomainError(
            f"need 0 <= gamma1 <= gamma2 < 1 (got gamma1={gamma1}, gamma2={gamma2})"
        )


def _check_point(kernel, x):
    if not x > 0:
        raise DomainError("the sign integrals and the return function need x > 0")
    if hasattr(kernel, "shifted"):
        kernel.shifted(x)


def G2(sf: ScaleFn, f: DrawdownFn, gamma2, x):
    """int_x^inf exp(-(1/(1-gamma2)) int_x^y W'/W(xi_bar(u)) du) g(y) dy."""
    kernel = DrawdownKernel(sf, f)
    _check_point(kernel, x)
    return _tail_g(kernel, gamma2, x)


def G1(sf: ScaleFn, f: DrawdownFn, gamma1, x):
    """G2 with gamma1 in the exponent."""
    kernel = DrawdownKernel(sf, f)
    _check_point(kernel, x)
    return _tail_g(kernel, gamma1, x)


# --------------------------------------------------------------------------
# classification


def _probe_grid(kernel, x0):
    start = ZERO_OFFSET / kernel.phi
    return np.geomspace(min(start, 0.5 * x0), x0, N_PROBE)


def _classify(kernel, gamma1, gamma2, pattern: SignPattern):
    """Return (label, probes, values, witness index or None, diagnostics)."""
    if pattern.pattern is Pattern.VIOLATED:
        raise AssumptionViolated(
            "g changes sign more than once; crossings near "
            + ", ".join(f"({a:.6g}, {b:.6g})" for a, b in pattern.crossings),
            pattern,
        )
    zero_plus = ZERO_OFFSET / kernel.phi
    degenerate = gamma1 == gamma2
    if pattern.pattern is Pattern.ALL_NONNEG:
        return CaseLabel.I, None, None, None, {"G2(0+)": _tail_g(kernel, gamma2, zero_plus)}
    if pattern.pattern is Pattern.ALL_NONPOS:
        return CaseLabel.III, None, None, None, {"G1(0+)": _tail_g(kernel, gamma1, zero_plus)}

    probes = _probe_grid(kernel, pattern.x0)
    if pattern.pattern is Pattern.NEG_TO_POS:
        vals = _tail_g_many(kernel, gamma2, probes)
        diag = {"G2(0+)": float(vals[0]), "G2_min": float(vals.min())}
        bad = np.flatnonzero(vals < -G_TOL)
        if degenerate or len(bad) == 0:
            return CaseLabel.II, probes, vals, None, diag
        return CaseLabel.V, probes, vals, int(bad[0]), diag

    vals = _tail_g_many(kernel, gamma1, probes)
    diag = {"G1(0+)": float(vals[0]), "G1_max": float(vals.max())}
    bad = np.flatnonzero(vals > G_TOL)
    if degenerate or len(bad) == 0:
        return CaseLabel.IV, probes, vals, None, diag
    return CaseLabel.VI, probes, vals, int(bad[0]), diag


def classify_case(sf: ScaleFn, f: DrawdownFn, gamma1, gamma2, pattern: SignPattern):
    _check_gammas(gamma1, gamma2)
    return _classify(DrawdownKernel(sf, f), gamma1, gamma2, pattern)[0]


def _switch(kernel, gamma, case, probes, vals, witness):
    """Zero of the sign integral to the right of the witness probe."""
    if case is CaseLabel.V:
        ok = vals >= 0
    else:
        ok = vals <= 0
    after = np.flatnonzero(ok[witness + 1:])
    if len(after) == 0:
        raise InconsistencyError(
            f"no sign change of the {'G2' if case is CaseLabel.V else 'G1'} integral "
            f"between the witness {probes[witness]:.6g} and x0 = {probes[-1]:.6g}"
        )
    j = witness + 1 + int(after[0])
    if vals[j] == 0.0:
        return float(probes[j])
    return brentq(lambda x: _tail_g(kernel, gamma, x), probes[j - 1], probes[j],
                  xtol=1e-13, rtol=8 * np.finfo(float).eps)


def find_switch_point(sf: ScaleFn, f: DrawdownFn, gamma1, gamma2, case, x0):
    """x1 (case V, zero of G2) or x2 (case VI, zero of G1) inside (witness, x0]."""
    case = CaseLabel(case)
    if case not in (CaseLabel.V, CaseLabel.VI):
        raise ValueError("switch points exist only in cases V and VI")
    kernel = DrawdownKernel(sf, f)
    probes = _probe_grid(kernel, x0)
    gamma = gamma2 if case is CaseLabel.V else gamma1
    vals = _tail_g_many(kernel, gamma, probes)
    bad = np.flatnonzero(vals < -G_TOL if case is CaseLabel.V else vals > G_TOL)
    if len(bad) == 0:
        raise InconsistencyError(f"no witness for case {case.value} on (0, {x0:.6g}]")
    return _switch(kernel, gamma, case, probes, vals, int(bad[0]))


# --------------------------------------------------------------------------
# solution


@dataclass(frozen=True)
class SolveReport:
    """Outcome of ``solve``.  ``gamma_star`` is the rule on the taxed running maximum."""

    case_label: CaseLabel
    x0: float
    switch_point: float | None
    gamma_star: TaxStrategy
    gamma1: float
    gamma2: float
    pattern: SignPattern
    diagnostics: dict = field(default_factory=dict)
    note: str = ""
    kernel: object = field(default=None, repr=False, compare=False)
    switch_value: float | None = None

    @property
    def value_fn(self):
        return lambda x: optimal_value(self, x)


@dataclass(frozen=True)
class HJBResidual:
    analytic: float
    finite_difference: float
    worst_x: float


def _levels(case, gamma1, gamma2):
    """(gamma below the switch, gamma above) for the case."""
    return {
        CaseLabel.I: (gamma2, gamma2),
        CaseLabel.II: (gamma2, gamma2),
        CaseLabel.III: (gamma1, gamma1),
        CaseLabel.IV: (gamma1, gamma1),
        CaseLabel.V: (gamma1, gamma2),
        CaseLabel.VI: (gamma2, gamma1),
    }[case]


def solve_kernel(kernel, gamma1, gamma2, pattern: SignPattern) -> SolveReport:
    """Solve for any kernel exposing ``rate``, ``g``, ``g_bound``, ``phi`` and ``linear``."""
    _check_gammas(gamma1, gamma2)
    label, probes, vals, witness, diag = _classify(kernel, gamma1, gamma2, pattern)
    note = ""
    if gamma1 == gamma2:
        note = "gamma1 == gamma2: the control set is a single rate, strategy is constant"
    switch = None
    switch_value = None
    lo, hi = _levels(label, gamma1, gamma2)
    if label in (CaseLabel.V, CaseLabel.VI):
        gamma = gamma2 if label is CaseLabel.V else gamma1
        switch = _switch(kernel, gamma, label, probes, vals, witness)
        diag["witness"] = float(probes[witness])
        diag["G(switch)"] = _tail_g(kernel, gamma, switch)
        switch_value = _constant_piece(kernel, hi, switch)[0]
        strategy = TaxStrategy(gamma1, gamma2, (switch,), (lo, hi))
    else:
        strategy = TaxStrategy(gamma1, gamma2, (), (lo,))
    report = SolveReport(label, pattern.x0, switch, strategy, gamma1, gamma2, pattern,
                         diag, note, kernel, switch_value)
    grid = _diagnostic_grid(report)
    diag["hjb_residual_analytic"] = _analytic_residual(report, grid)[0]
    return report


def solve(sf: ScaleFn, f: DrawdownFn, gamma1, gamma2, search_max=None) -> SolveReport:
    _check_gammas(gamma1, gamma2)
    pattern = find_sign_change(sf, f, search_max)
    return solve_kernel(DrawdownKernel(sf, f), gamma1, gamma2, pattern)


def _value_and_gamma(report: SolveReport, x):
    kernel = report.kernel
    _check_point(kernel, x)
    lo, hi = _levels(report.case_label, report.gamma1, report.gamma2)
    b = report.switch_point
    if b is None or x >= b:
        return _constant_piece(kernel, hi, x)[0], hi
    head, e_b = _constant_piece(kernel, lo, x, b)
    return head + e_b * report.switch_value, lo


def optimal_value(report: SolveReport, x):
    """The optimal return function f(x); vectorized over ``x``."""
    if np.ndim(x) == 0:
        return float(_value_and_gamma(report, float(x))[0])
    return np.array([_value_and_gamma(report, float(v))[0] for v in np.ravel(x)]).reshape(
        np.shape(x))


def optimal_strategy(report: SolveReport) -> TaxStrategy:
    """The optimal rule as a function of the taxed running maximum."""
    return report.gamma_star


def strategy_for_start(report: SolveReport, x) -> TaxStrategy:
    """The optimal rule re-indexed by the untaxed running maximum, for a path started at x.

    The taxed maximum reaches the switch level b when the untaxed maximum
    reaches x + (b - x)/(1 - gamma_below).
    """
    s = report.gamma_star
    b = report.switch_point
    if b is None or x >= b:
        return TaxStrategy(s.gamma1, s.gamma2, (), (s.values[-1],))
    lo = s.values[0]
    return TaxStrategy(s.gamma1, s.gamma2, (x + (b - x) / (1.0 - lo),), s.values)


def _hjb_terms(report, x, f, fprime):
    rate = float(report.kernel.rate(x))
    best = -math.inf
    for gam in (report.gamma1, report.gamma2):
        best = max(best, (gam - rate * f) / (1.0 - gam) + fprime)
    return best


def _analytic_residual(report, xs):
    worst, at = 0.0, math.nan
    for x in xs:
        f, gam = _value_and_gamma(report, x)
        rate = float(report.kernel.rate(x))
        fprime = (rate * f - gam) / (1.0 - gam)
        r = abs(_hjb_terms(report, x, f, fprime))
        if r > worst or math.isnan(at):
            worst, at = r, x
    return worst, at


def _diagnostic_grid(report):
    top = max(report.x0 if math.isfinite(report.x0) else 0.0, 1.0 / report.kernel.phi)
    lo = ZERO_OFFSET / report.kernel.phi * 100
    grid = np.geomspace(lo, 10 * top, 24)
    if report.switch_point is not None:
        grid = grid[np.abs(grid - report.switch_point) > 1e-6]
    return grid


def hjb_residual(report: SolveReport, sf: ScaleFn | None, f: DrawdownFn | None, xs,
                 h=FD_STEP) -> HJBResidual:
    """Max HJB residual on ``xs`` with f' analytic and by central differences.

    ``sf`` and ``f`` default to the ones the report was solved with.
    """
    if sf is not None and f is not None:
        kernel = DrawdownKernel(sf, f)
        report = SolveReport(report.case_label, report.x0, report.switch_point,
                             report.gamma_star, report.gamma1, report.gamma2, report.pattern,
                             report.diagnostics, report.note, kernel, report.switch_value)
    xs = np.asarray(xs, dtype=float)
    analytic, _ = _analytic_residual(report, xs)
    worst, at = 0.0, math.nan
    for x in xs:
        f0 = _value_and_gamma(report, x)[0]
        fd = (_value_and_gamma(report, x + h)[0] - _value_and_gamma(report, x - h)[0]) / (2 * h)
        r = abs(_hjb_terms(report, x, f0, fd))
        if r > worst or math.isnan(at):
            worst, at = r, float(x)
    return HJBResidual(analytic, worst, at)


def power_form_value(sf: ScaleFn, gamma1, gamma2, x1, x):
    """Return function for xi == 0 in power form.

    Above x1: gamma2/(1-gamma2) int_x^inf (W(x)/W(y))^{1/(1-gamma2)} dy.
    Below x1 the gamma1 piece is glued on:
    (W(x)/W(x1))^{c1} f(x1) + gamma1 c1 int_x^{x1} (W(x)/W(y))^{c1} dy.
    """
    if not x > 0:
        raise DomainError("x must be > 0")

    def power_tail(gam, a, b):
        c = 1.0 / (1.0 - gam)
        lw = sf.log_w(a)
        return integrate(lambda y: np.exp(c * (lw - sf.log_w(y))), a, b,
                         epsabs=EPSABS, epsrel=EPSREL)

    c2 = 1.0 / (1.0 - gamma2)

    def upper(a):
        end = a + math.log(max(gamma2 * c2, TAIL_EPS) / TAIL_EPS) / (c2 * sf.phi_q)
        return gamma2 * c2 * power_tail(gamma2, a, end)

    if x1 is None or x >= x1:
        return upper(x)
    c1 = 1.0 / (1.0 - gamma1)
    ratio = math.exp(c1 * (sf.log_w(x) - sf.log_w(x1)))
    return ratio * upper(x1) + gamma1 * c1 * power_tail(gamma1, x, x1)
