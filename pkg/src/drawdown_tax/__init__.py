"""Optimal loss-carry-forward taxation of spectrally negative Levy surplus
processes stopped at a general draw-down time."""

__version__ = "0.1.0"

from .drawdown import (
    LinearDrawdown,
    Pattern,
    SignPattern,
    TabulatedDrawdown,
    find_sign_change,
    g_fn,
    xi,
    xi_bar,
    xi_prime,
)
from .errors import (
    AssumptionViolated,
    ConfigError,
    DomainError,
    DrawdownTaxError,
    InconsistencyError,
    SingularInputError,
)
from .levy_models import (
    BrownianDrift,
    CramerLundberg,
    ScaleFn,
    laplace_exponent,
    phi,
    scale_w,
    w_log_derivative,
)
from .mc_sim import McEstimate, SimConfig, estimate_exit, estimate_tax, simulate_taxed_path
from .optimal_tax import (
    G1,
    G2,
    CaseLabel,
    SolveReport,
    classify_case,
    find_switch_point,
    hjb_residual,
    optimal_strategy,
    optimal_value,
    solve,
    strategy_for_start,
    power_form_value,
)
from .taxed_exit import (
    TaxStrategy,
    exit_laplace,
    gamma_bar,
    gamma_bar_inv,
    tax_return,
    tax_return_to_barrier,
)
