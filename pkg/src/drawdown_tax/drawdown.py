"""Draw-down functions xi, the sign function g, and sign-change detection."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import DomainError, SingularInputError
from .levy_models import ScaleFn

__all__ = [
    "LinearDrawdown",
    "TabulatedDrawdown",
    "DrawdownFn",
    "Pattern",
    "SignPattern",
    "xi",
    "xi_prime",
    "xi_bar",
    "g_fn",
    "find_sign_change",
]

ZERO_TOL = 1e-12
BISECT_TOL = 1e-8
N_UNIFORM = 512
N_LOG = 128


@dataclass(frozen=True)
class LinearDrawdown:
    """xi(x) = k x - d with k < 1 and d >= 0."""

    k: float
    d: float

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise DomainError("; ".join(problems))

    def problems(self):
        out = []
        if not (math.isfinite(self.k) and self.k < 1):
            out.append(f"draw-down slope k must be < 1 (got {self.k})")
        if not (math.isfinite(self.d) and self.d >= 0):
            out.append(f"draw-down intercept d must be >= 0 (got {self.d})")
        return out

    @property
    def x_max(self):
        return math.inf

    def value(self, x):
        return self.k * np.asarray(x, dtype=float) - self.d

    def derivative(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.k)

    def shifted(self, x):
        return (1.0 - self.k) * np.asarray(x, dtype=float) + self.d


@dataclass(frozen=True, eq=False)
class TabulatedDrawdown:
    """xi given on knots (x, xi(x), xi'(x)), interpolated by a C1 cubic Hermite spline.

    The spline is built from the stored knot derivatives, so xi' at every knot
    is exactly the tabulated value.
    """

    x: np.ndarray
    values: np.ndarray
    slopes: np.ndarray
    _spline: CubicHermiteSpline = field(init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        v = np.asarray(self.values, dtype=float)
        s = np.asarray(self.slopes, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "slopes", s)
        problems = self.problems()
        if problems:
            raise DomainError("; ".join(problems))
        object.__setattr__(self, "_spline", CubicHermiteSpline(x, v, s))
        mids = 0.5 * (x[1:] + x[:-1])
        if np.any(self._spline(mids) >= mids):
            raise DomainError("tabulated draw-down violates xi(y) < y between knots")

    def problems(self):
        x, v, s = self.x, self.values, self.slopes
        out = []
        if x.ndim != 1 or len(x) < 2 or v.shape != x.shape or s.shape != x.shape:
            return ["tabulated draw-down needs equal-length 1-D columns with >= 2 rows"]
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(v)) or not np.all(np.isfinite(s)):
            out.append("tabulated draw-down contains non-finite entries")
        if np.any(np.diff(x) <= 0):
            out.append("tabulated draw-down knots must be strictly increasing")
        if x[0] < 0:
            out.append("tabulated draw-down knots must be >= 0")
        if np.any(v >= x):
            out.append("tabulated draw-down violates xi(y) < y at a knot")
        return out

    @classmethod
    def from_csv(cls, path):
        """Read columns ``x, xi, xi_prime`` (header required, ``#`` lines skipped)."""
        with open(path, newline="") as fh:
            rows = [line for line in fh if not line.lstrip().startswith("#")]
        reader = csv.DictReader(rows)
        cols = {"x": [], "xi": [], "xi_prime": []}
        for row in reader:
            for key in cols:
                cols[key].append(float(row[key]))
        return cls(np.array(cols["x"]), np.array(cols["xi"]), np.array(cols["xi_prime"]))

    @property
    def x_max(self):
        return float(self.x[-1])

    def _check(self, x):
        arr = np.asarray(x, dtype=float)
        if np.any(arr < self.x[0]) or np.any(arr > self.x[-1]):
            raise DomainError(
                f"tabulated draw-down evaluated outside [{self.x[0]}, {self.x[-1]}]"
            )
        return arr

    def value(self, x):
        return self._spline(self._check(x))

    def derivative(self, x):
        return self._spline(self._check(x), 1)

    def shifted(self, x):
        arr = self._check(x)
        return arr - self._spline(arr)


DrawdownFn = Union[LinearDrawdown, TabulatedDrawdown]


def _scalar(out):
    return float(out) if np.ndim(out) == 0 else out


def _check_x(x):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr >= 0)):
        raise DomainError("draw-down functions are evaluated at x >= 0")
    return arr


def xi(f: DrawdownFn, x):
    return _scalar(f.value(_check_x(x)))


def xi_prime(f: DrawdownFn, x):
    return _scalar(f.derivative(_check_x(x)))


def xi_bar(f: DrawdownFn, x):
    """x - xi(x): the allowed distance below the running maximum."""
    return _scalar(f.shifted(_check_x(x)))


def g_fn(sf: ScaleFn, f: DrawdownFn, x):
    """g(x) = xi'(x) + (1 - xi'(x)) W''W/(W')^2 evaluated at x - xi(x)."""
    arr = _check_x(x)
    z = f.shifted(arr)
    if np.any(z <= 0):
        raise SingularInputError("g needs x - xi(x) > 0")
    slope = f.derivative(arr)
    return _scalar(slope + (1.0 - slope) * sf.curvature_ratio(z))


class Pattern(enum.Enum):
    NEG_TO_POS = "neg_to_pos"
    POS_TO_NEG = "pos_to_neg"
    ALL_NONNEG = "all_nonneg"
    ALL_NONPOS = "all_nonpos"
    VIOLATED = "violated"


@dataclass(frozen=True)
class SignPattern:
    """Outcome of scanning g on (0, search_max].

    ``x0`` is the refined sign-change point, 0 for ALL_NONNEG, +inf for
    ALL_NONPOS and NaN for VIOLATED.  ``crossings`` lists bracketing
    intervals of every sign change seen on the grid.
    """

    x0: float
    pattern: Pattern
    search_max: float
    crossings: tuple = ()


def scan_grid(sf: ScaleFn, search_max: float, x_max: float = math.inf):
    """Union of N_UNIFORM uniform points on (0, search_max] and N_LOG log-spaced points near 0."""
    hi = min(search_max, x_max)
    uniform = hi * np.arange(1, N_UNIFORM + 1) / N_UNIFORM
    start = 1e-8 / sf.phi_q
    near = np.geomspace(start, uniform[0], N_LOG, endpoint=False)
    return np.unique(np.concatenate([near, uniform]))


def find_sign_change(sf: ScaleFn, f: DrawdownFn, search_max: float | None = None) -> SignPattern:
    """Locate the point where g changes sign (Assumption 1 check)."""
    if search_max is None:
        search_max = 50.0 / sf.phi_q
    if not search_max > 0:
        raise DomainError("search_max must be > 0")
    grid = scan_grid(sf, search_max, f.x_max)
    vals = np.asarray(g_fn(sf, f, grid))
    sign = np.where(np.abs(vals) < ZERO_TOL, 0, np.sign(vals)).astype(int)
    nz = np.flatnonzero(sign)
    if len(nz) == 0:
        return SignPattern(0.0, Pattern.ALL_NONNEG, search_max)
    flips = [(nz[i], nz[i + 1]) for i in range(len(nz) - 1) if sign[nz[i]] != sign[nz[i + 1]]]
    crossings = tuple((float(grid[i]), float(grid[j])) for i, j in flips)
    if len(flips) >= 2:
        return SignPattern(math.nan, Pattern.VIOLATED, search_max, crossings)
    if not flips:
        if sign[nz[0]] > 0:
            return SignPattern(0.0, Pattern.ALL_NONNEG, search_max)
        return SignPattern(math.inf, Pattern.ALL_NONPOS, search_max)
    i, j = flips[0]
    lo, hi = float(grid[i]), float(grid[j])
    s_lo = sign[i]
    while hi - lo >= BISECT_TOL:
        mid = 0.5 * (lo + hi)
        gm = g_fn(sf, f, mid)
        if abs(gm) < ZERO_TOL:
            lo = hi = mid
            break
        if np.sign(gm) == s_lo:
            lo = mid
        else:
            hi = mid
    x0 = 0.5 * (lo + hi)
    pattern = Pattern.NEG_TO_POS if s_lo < 0 else Pattern.POS_TO_NEG
    return SignPattern(x0, pattern, search_max, crossings)


class DrawdownKernel:
    """The rate y -> W'/W(y - xi(y)) shared by every exit and tax identity.

    For a linear xi the integrated rate has the closed form
    ``(log W(xi_bar(y)) - log W(xi_bar(x))) / (1 - k)``; otherwise it is
    integrated numerically.
    """

    def __init__(self, sf: ScaleFn, f: DrawdownFn):
        self.sf = sf
        self.f = f
        self.linear = isinstance(f, LinearDrawdown)
        self.phi = sf.phi_q

    def shifted(self, y):
        z = self.f.shifted(np.asarray(y, dtype=float))
        if np.any(z < 0) or (self.sf.w_at_zero == 0.0 and np.any(z <= 0)):
            raise SingularInputError(
                "x - xi(x) must stay positive where W'/W is evaluated"
            )
        return z

    def rate(self, y):
        return self.sf.log_derivative(self.shifted(y))

    def log_w(self, y):
        """log W(xi_bar(y)); integrates the rate in closed form when xi is linear."""
        return self.sf.log_w(self.shifted(y))

    def g(self, y):
        y = np.asarray(y, dtype=float)
        z = self.shifted(y)
        slope = self.f.derivative(y)
        return slope + (1.0 - slope) * self.sf.curvature_ratio(z)

    def g_bound(self):
        """Crude sup |g| used only to size truncation horizons."""
        if self.linear:
            return 1.0 + abs(self.f.k)
        return 1.0 + float(np.max(np.abs(self.f.slopes)))

    def integrated_rate(self, x, y):
        """int_x^y W'/W(xi_bar(u)) du (vectorized in ``y`` on the linear path)."""
        if self.linear:
            return (self.log_w(y) - self.log_w(x)) / (1.0 - self.f.k)
        from .quadrature import integrate

        return integrate(self.rate, x, y)
