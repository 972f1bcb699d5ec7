"""Spectrally negative Levy models with closed-form scale functions.

Two families are supported, both with a q-scale function that is a sum of
two exponentials::

    W(x) = c_plus * exp(theta_plus * x) + c_minus * exp(theta_minus * x)

where ``theta_plus = Phi(q) > 0 > theta_minus``.  Brownian motion with drift
``X_t = mu t + sigma B_t`` has ``c_minus = -c_plus = -1/(sigma^2 Xi)`` with
``Xi = sqrt(mu^2 + 2 q sigma^2)/sigma^2``, which is the familiar
``2/(sigma^2 Xi) exp(-mu x/sigma^2) sinh(Xi x)``.  The Cramer-Lundberg model
with exponential claims has ``c_pm = +-A_pm/p``.

All evaluation goes through the factored form ``exp(theta_plus x) * B(x)``
with the bracket ``B`` bounded, so ratios such as W'/W never overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError

__all__ = [
    "BrownianDrift",
    "CramerLundberg",
    "LevyModel",
    "ScaleFn",
    "laplace_exponent",
    "phi",
    "scale_w",
    "w_log_derivative",
]

PHI_RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class BrownianDrift:
    """X_t = mu t + sigma B_t."""

    mu: float
    sigma: float

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise DomainError("; ".join(problems))

    def problems(self):
        out = []
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            out.append(f"sigma must be > 0 (got {self.sigma})")
        if not (math.isfinite(self.mu) and self.mu >= 0):
            out.append(f"psi'(0+) = mu must be >= 0 (got {self.mu})")
        return out


@dataclass(frozen=True)
class CramerLundberg:
    """X_t = x + p t - sum of N_t Exp(mu_jump) claims, N a Poisson(lam) process."""

    p: float
    lam: float
    mu_jump: float

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise DomainError("; ".join(problems))

    def problems(self):
        out = []
        for name in ("p", "lam", "mu_jump"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                out.append(f"{name} must be > 0 (got {v})")
        if not out and self.p < self.lam / self.mu_jump:
            out.append(
                f"psi'(0+) = p - lam/mu_jump must be >= 0 "
                f"(got {self.p - self.lam / self.mu_jump:.6g})"
            )
        return out


LevyModel = Union[BrownianDrift, CramerLundberg]


def laplace_exponent(model: LevyModel, theta):
    """psi(theta) = log E[exp(theta (X_1 - x))] for theta >= 0."""
    th = np.asarray(theta, dtype=float)
    if np.any(th < 0) or np.any(np.isnan(th)):
        raise DomainError("laplace_exponent needs theta >= 0")
    if isinstance(model, BrownianDrift):
        out = model.mu * th + 0.5 * model.sigma**2 * th**2
    elif isinstance(model, CramerLundberg):
        out = model.p * th - model.lam * th / (model.mu_jump + th)
    else:
        raise TypeError(f"unsupported model {model!r}")
    return float(out) if np.ndim(out) == 0 else out


def _laplace_exponent_prime(model: LevyModel, theta: float) -> float:
    if isinstance(model, BrownianDrift):
        return model.mu + model.sigma**2 * theta
    return model.p - model.lam * model.mu_jump / (model.mu_jump + theta) ** 2


def _phi_closed_form(model: LevyModel, q: float) -> float:
    if q == 0.0:
        return 0.0
    if isinstance(model, BrownianDrift):
        mu, s2 = model.mu, model.sigma**2
        # 2q / (mu + sqrt(mu^2 + 2 q s2)) avoids cancellation for large mu
        return 2.0 * q / (mu + math.sqrt(mu * mu + 2.0 * q * s2))
    p, lam, m = model.p, model.lam, model.mu_jump
    b = p * m - lam - q
    disc = math.sqrt(b * b + 4.0 * p * q * m)
    if b <= 0:
        return (-b + disc) / (2.0 * p)
    return 2.0 * q * m / (b + disc)


def _phi_newton(model: LevyModel, q: float, tol: float = 1e-15) -> float:
    """Safeguarded Newton for the largest root of psi(theta) = q."""
    if q == 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while laplace_exponent(model, hi) <= q:
        lo, hi = hi, 2.0 * hi
    th = hi
    for _ in range(200):
        f = laplace_exponent(model, th) - q
        if f > 0:
            hi = th
        else:
            lo = th
        d = _laplace_exponent_prime(model, th)
        step = th - f / d if d > 0 else 0.5 * (lo + hi)
        if not (lo < step < hi):
            step = 0.5 * (lo + hi)
        if abs(step - th) <= tol * max(1.0, abs(step)):
            return step
        th = step
    return th


def phi(model: LevyModel, q: float) -> float:
    """Right inverse Phi(q): the largest theta >= 0 with psi(theta) = q.

    The closed form is cross-checked against a safeguarded Newton solve and by
    plugging back into psi; a failed check raises ``ArithmeticError``.
    """
    if not q >= 0:
        raise DomainError(f"phi needs q >= 0 (got {q})")
    th = _phi_closed_form(model, float(q))
    resid = abs(laplace_exponent(model, th) - q)
    if resid > PHI_RESIDUAL_TOL * max(1.0, q):
        raise ArithmeticError(f"Phi({q}) plug-back residual {resid:.3g}")
    th_newton = _phi_newton(model, float(q))
    if abs(th_newton - th) > 1e-9 * max(1.0, th):
        raise ArithmeticError(f"Phi({q}): closed form {th!r} vs Newton {th_newton!r}")
    return th


class ScaleFn:
    """q-scale function W^(q) of a model, with exponents cached at construction.

    Instances are immutable after ``__init__``; all methods accept scalars or
    numpy arrays.
    """

    def __init__(self, model: LevyModel, q: float):
        if not (math.isfinite(q) and q > 0):
            raise DomainError(f"scale functions here need q > 0 (got {q})")
        self.model = model
        self.q = float(q)
        self.phi_q = phi(model, q)
        if isinstance(model, BrownianDrift):
            s2 = model.sigma**2
            xi = math.sqrt(model.mu**2 + 2.0 * q * s2) / s2
            drift = -model.mu / s2
            self.theta_plus = self.phi_q
            self.theta_minus = drift - xi
            self.c_plus = 1.0 / (s2 * xi)
            self.c_minus = -self.c_plus
            self._antisymmetric = True
            self.Xi = xi
        else:
            p = model.p
            b = q + model.lam - model.mu_jump * p
            disc = math.sqrt(b * b + 4.0 * p * q * model.mu_jump)
            self.theta_plus = self.phi_q
            self.theta_minus = (b - disc) / (2.0 * p)
            span = self.theta_plus - self.theta_minus
            a_plus = (model.mu_jump + self.theta_plus) / span
            a_minus = (model.mu_jump + self.theta_minus) / span
            self.c_plus = a_plus / p
            self.c_minus = -a_minus / p
            self._antisymmetric = False
            self.A_plus = a_plus
            self.A_minus = a_minus
        self.gap = self.theta_plus - self.theta_minus

    def __repr__(self):
        return f"ScaleFn({self.model!r}, q={self.q!r})"

    def _bracket(self, x, order):
        """B_n(x) with W^(n)(x) = exp(theta_plus x) B_n(x)."""
        e = np.exp(-self.gap * x)
        if order == 0 and self._antisymmetric:
            return -self.c_plus * np.expm1(-self.gap * x)
        return self.c_plus * self.theta_plus**order + self.c_minus * self.theta_minus**order * e

    def w(self, x, order: int = 0):
        x = _check_nonneg(x)
        if order not in (0, 1, 2):
            raise DomainError(f"order must be 0, 1 or 2 (got {order})")
        out = np.exp(self.theta_plus * x) * self._bracket(x, order)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def w_at_zero(self):
        """W(0): 0 for unbounded-variation (Brownian) paths, 1/p for Cramer-Lundberg."""
        return 0.0 if self._antisymmetric else self.c_plus + self.c_minus

    def _check_ratio_arg(self, x):
        arr = np.asarray(x, dtype=float)
        bad = ~(arr > 0) if self._antisymmetric else ~(arr >= 0)
        if np.any(bad):
            raise DomainError(
                "argument must be > 0 (W'/W is singular at 0 for this family)"
                if self._antisymmetric else "argument must be >= 0"
            )
        return arr

    def log_w(self, x):
        """log W(x), finite far beyond where W itself overflows."""
        x = self._check_ratio_arg(x)
        out = self.theta_plus * x + np.log(self._bracket(x, 0))
        return float(out) if np.ndim(out) == 0 else out

    def log_derivative(self, x):
        """W'(x)/W(x); x > 0 for Brownian motion, x >= 0 for Cramer-Lundberg."""
        x = self._check_ratio_arg(x)
        out = self._bracket(x, 1) / self._bracket(x, 0)
        return float(out) if np.ndim(out) == 0 else out

    def inverse_log_derivative(self, x):
        """W(x)/W'(x) for x >= 0 (zero at the origin for the Brownian family)."""
        x = _check_nonneg(x)
        out = self._bracket(x, 0) / self._bracket(x, 1)
        return float(out) if np.ndim(out) == 0 else out

    def curvature_ratio(self, x):
        """W''(x) W(x) / W'(x)^2 for x >= 0."""
        x = _check_nonneg(x)
        b1 = self._bracket(x, 1)
        out = self._bracket(x, 2) * self._bracket(x, 0) / (b1 * b1)
        return float(out) if np.ndim(out) == 0 else out


def _check_nonneg(x):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr >= 0)):
        raise DomainError("scale function argument must be >= 0")
    return arr


def scale_w(sf: ScaleFn, x, order: int = 0):
    """W^(q)(x) or its first/second derivative, evaluated analytically."""
    return sf.w(x, order)


def w_log_derivative(sf: ScaleFn, x):
    """W^(q)'(x)/W^(q)(x); bounded below by Phi(q) for every x > 0."""
    return sf.log_derivative(x)
