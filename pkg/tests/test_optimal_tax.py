import math

import numpy as np
import pytest

from drawdown_tax import (
    G1,
    G2,
    AssumptionViolated,
    BrownianDrift,
    CaseLabel,
    DomainError,
    LinearDrawdown,
    Pattern,
    ScaleFn,
    TabulatedDrawdown,
    TaxStrategy,
    classify_case,
    find_sign_change,
    find_switch_point,
    hjb_residual,
    optimal_strategy,
    optimal_value,
    solve,
    strategy_for_start,
    tax_return,
    power_form_value,
)
from drawdown_tax.drawdown import DrawdownKernel, SignPattern
from drawdown_tax.optimal_tax import solve_kernel

from oracles import g2_no_drawdown

K_II = LinearDrawdown(0.1, 1.0)
K_V = LinearDrawdown(-1.0, 1.0)


@pytest.fixture(scope="module")
def rep_ii(sf):
    return solve(sf, K_II, 0.2, 0.6)


@pytest.fixture(scope="module")
def rep_v(sf):
    return solve(sf, K_V, 0.2, 0.6)


def test_g1_equals_g2_for_equal_rates(sf):
    for x in (0.3, 1.0, 4.0):
        assert G1(sf, K_V, 0.4, x) == G2(sf, K_V, 0.4, x)


def test_g2_signs(sf):
    xs = np.geomspace(1e-3, 1.36, 12)
    assert all(G2(sf, K_II, 0.6, x) >= -1e-10 for x in xs)
    assert G2(sf, K_V, 0.6, 0.05) < 0
    assert G2(sf, K_V, 0.6, 1.0) > 0
    with pytest.raises(DomainError):
        G2(sf, K_V, 0.6, 0.0)


@pytest.mark.parametrize("x", [0.1, 0.8, 2.0, 6.0])
def test_g2_without_drawdown_matches_oracle(sf, x):
    assert G2(sf, LinearDrawdown(0.0, 0.0), 0.6, x) == pytest.approx(
        g2_no_drawdown(0.6, x), abs=1e-10)


def test_constant_value_identity(sf, rep_ii):
    # integrating g by parts: f_gamma2 = 1/rate - G2
    kern = DrawdownKernel(sf, K_II)
    for x in (0.05, 0.5, 1.0, 3.0, 10.0):
        assert optimal_value(rep_ii, x) == pytest.approx(
            1 / kern.rate(x) - G2(sf, K_II, 0.6, x), abs=1e-10)


def test_case_ii(rep_ii):
    assert rep_ii.case_label is CaseLabel.II
    assert rep_ii.switch_point is None
    s = optimal_strategy(rep_ii)
    assert s.is_constant and s.values == (0.6,)
    assert abs(rep_ii.x0 - 1.360) < 1e-3


def test_case_v(sf, rep_v):
    assert rep_v.case_label is CaseLabel.V
    x1 = rep_v.switch_point
    assert 0 < x1 <= rep_v.x0 <= 1.444
    assert abs(G2(sf, K_V, 0.6, x1)) < 1e-8
    assert G2(sf, K_V, 0.6, 0.5 * x1) < 0
    s = optimal_strategy(rep_v)
    assert s(0.5 * x1) == 0.2 and s(x1) == 0.6
    again = find_switch_point(sf, K_V, 0.2, 0.6, "V", rep_v.x0)
    assert again == pytest.approx(x1, abs=1e-12)


def test_value_is_c1_at_switch(rep_v):
    x1 = rep_v.switch_point
    assert abs(optimal_value(rep_v, x1 - 1e-12) - optimal_value(rep_v, x1)) < 1e-10
    d = 1e-4
    dl = (optimal_value(rep_v, x1) - optimal_value(rep_v, x1 - d)) / d
    dr = (optimal_value(rep_v, x1 + d) - optimal_value(rep_v, x1)) / d
    fd = 1e-5
    dl2 = (optimal_value(rep_v, x1 - d) - optimal_value(rep_v, x1 - d - fd)) / fd
    assert abs(dl - dr) < 1e-3 * max(1.0, abs(dl))
    assert abs(dl - dl2) < 1e-3 * max(1.0, abs(dl))


def test_first_order_condition(sf, rep_v):
    # gamma2 is chosen where rate * f <= 1, gamma1 where it is >= 1
    kern = DrawdownKernel(sf, K_V)
    x1 = rep_v.switch_point
    below = np.linspace(0.02, x1 - 1e-3, 15)
    above = np.linspace(x1 + 1e-3, 30, 30)
    assert all(kern.rate(x) * optimal_value(rep_v, x) >= 1 - 1e-8 for x in below)
    assert all(kern.rate(x) * optimal_value(rep_v, x) <= 1 + 1e-8 for x in above)


@pytest.mark.parametrize("rep", ["rep_ii", "rep_v"])
def test_value_equals_tax_return_of_strategy(sf, request, rep):
    report = request.getfixturevalue(rep)
    f = K_II if rep == "rep_ii" else K_V
    for x in (0.1, 0.3, 1.0, 3.0, 5.0):
        s = strategy_for_start(report, x)
        assert tax_return(sf, s, f, x) == pytest.approx(optimal_value(report, x), abs=1e-7)
        assert optimal_value(report, x) <= 0.6 / sf.phi_q + 1e-10


def test_vectorized_value(rep_v):
    xs = np.array([[0.2, 1.0], [3.0, 9.0]])
    out = optimal_value(rep_v, xs)
    assert out.shape == (2, 2)
    assert out[1, 0] == optimal_value(rep_v, 3.0)
    assert rep_v.value_fn(1.0) == optimal_value(rep_v, 1.0)


def test_hjb_residual(rep_v):
    xs = np.linspace(0.05, 20, 60)
    xs = xs[np.abs(xs - rep_v.switch_point) > 1e-6]
    res = hjb_residual(rep_v, None, None, xs)
    assert res.analytic < 1e-12
    assert res.finite_difference < 1e-5


def test_degenerate_rates(sf):
    rep = solve(sf, K_V, 0.4, 0.4)
    assert rep.case_label is CaseLabel.II
    assert rep.note
    assert optimal_strategy(rep).values == (0.4,)


def test_zero_rates_give_zero(sf):
    rep = solve(sf, K_II, 0.0, 0.0)
    assert optimal_value(rep, 2.0) == 0.0


def test_assumption_violation(sf):
    x = np.linspace(0.0, 6.0, 13)
    slopes = np.where(np.arange(13) % 2 == 0, -2.0, 0.9)
    f = TabulatedDrawdown(x, np.full(13, -1.0), slopes)
    with pytest.raises(AssumptionViolated) as err:
        solve(sf, f, 0.2, 0.6)
    assert err.value.pattern.pattern is Pattern.VIOLATED
    with pytest.raises(DomainError):
        solve(sf, K_V, 0.7, 0.6)


def test_case_i_driftless():
    s = ScaleFn(BrownianDrift(0.0, 0.5), 0.02)
    f = LinearDrawdown(0.3, 0.5)
    rep = solve(s, f, 0.1, 0.5)
    assert rep.case_label is CaseLabel.I
    assert optimal_value(rep, 1.0) == pytest.approx(
        tax_return(s, TaxStrategy.constant(0.5, 0.1, 0.5), f, 1.0), abs=1e-9)


def test_no_drawdown_matches_power_form(sf):
    f = LinearDrawdown(0.0, 0.0)
    rep = solve(sf, f, 0.2, 0.6)
    assert rep.case_label is CaseLabel.V
    x1 = rep.switch_point
    for x in np.linspace(0.05, 3 * x1, 12):
        assert optimal_value(rep, x) == pytest.approx(
            power_form_value(sf, 0.2, 0.6, x1, x), rel=1e-8)
    assert power_form_value(sf, 0.2, 0.6, None, 1.0) == pytest.approx(
        solve(sf, f, 0.6, 0.6).value_fn(1.0), rel=1e-10)


# a synthetic kernel with rate == phi and a prescribed g exercises the
# sign-integral cases that real scale functions never produce

class FlatKernel:
    linear = False

    def __init__(self, phi, g):
        self.phi = phi
        self._g = g

    def rate(self, y):
        return np.full_like(np.asarray(y, dtype=float), self.phi)

    def g(self, y):
        return self._g(np.asarray(y, dtype=float))

    def g_bound(self):
        return 2.0


def decaying_g(y):
    return -1.0 + 2.0 * np.exp(-y)


POS_NEG = SignPattern(math.log(2.0), Pattern.POS_TO_NEG, 20.0)


def test_synthetic_case_vi():
    phi, g1, g2 = 5.0, 0.2, 0.6
    rep = solve_kernel(FlatKernel(phi, decaying_g), g1, g2, POS_NEG)
    assert rep.case_label is CaseLabel.VI
    a = phi / (1 - g1)
    x2 = math.log(2 * a / (a + 1))
    assert rep.switch_point == pytest.approx(x2, abs=1e-10)
    s = optimal_strategy(rep)
    assert s(0.5 * x2) == g2 and s(x2 + 0.1) == g1
    for x in (0.3 * x2, 0.9 * x2):
        e = math.exp(-phi / (1 - g2) * (x2 - x))
        assert optimal_value(rep, x) == pytest.approx(g2 / phi * (1 - e) + e * g1 / phi, rel=1e-10)
    assert optimal_value(rep, 2 * x2) == pytest.approx(g1 / phi, rel=1e-10)


def test_synthetic_case_iv():
    rep = solve_kernel(FlatKernel(0.2, decaying_g), 0.2, 0.6, POS_NEG)
    assert rep.case_label is CaseLabel.IV
    assert optimal_value(rep, 0.4) == pytest.approx(0.2 / 0.2, rel=1e-10)


def test_synthetic_g1_closed_form():
    # with a = phi/(1 - gamma1): G1(x) = -1/a + 2 exp(-x)/(a + 1)
    from drawdown_tax.optimal_tax import _tail_g

    kern = FlatKernel(5.0, decaying_g)
    a = 5.0 / 0.8
    for x in (0.05, 0.3, 0.69):
        assert _tail_g(kern, 0.2, x) == pytest.approx(-1 / a + 2 * math.exp(-x) / (a + 1), abs=1e-12)


def test_synthetic_case_iii():
    pattern = SignPattern(math.inf, Pattern.ALL_NONPOS, 20.0)
    rep = solve_kernel(FlatKernel(0.5, lambda y: np.full_like(y, -0.5)), 0.1, 0.6, pattern)
    assert rep.case_label is CaseLabel.III
    assert optimal_value(rep, 1.0) == pytest.approx(0.1 / 0.5, rel=1e-10)


def test_classify_case_matches_solve(sf):
    pat = find_sign_change(sf, K_V)
    assert classify_case(sf, K_V, 0.2, 0.6, pat) is CaseLabel.V
    assert classify_case(sf, K_II, 0.2, 0.6, find_sign_change(sf, K_II)) is CaseLabel.II
