"""Command-line front end.

A run is described by an optional TOML file with sections ``model``, ``xi``,
``control``, ``output`` (and ``simulate`` for simulator settings); command
line flags override file values.  Without a file the defaults are the
Brownian example mu=0.03, sigma=0.4, q=0.01, xi(x)=0.1x-1, gamma in
[0.2, 0.6].

Exit codes: 0 success, 1 usage or configuration error, 2 the sign function g
changes sign more than once, 3 a verification gate failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .drawdown import LinearDrawdown, TabulatedDrawdown, g_fn
from .errors import AssumptionViolated, ConfigError, DomainError, DrawdownTaxError
from .levy_models import BrownianDrift, CramerLundberg, ScaleFn, laplace_exponent
from .mc_sim import SimConfig, estimate_exit, estimate_tax
from .optimal_tax import (
    G2,
    hjb_residual,
    optimal_value,
    solve,
    strategy_for_start,
)
from .quadrature import integrate
from .taxed_exit import TaxStrategy, exit_laplace, tax_return, upper_bound

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_USAGE, EXIT_ASSUMPTION, EXIT_GATE = 0, 1, 2, 3

DEFAULTS = {
    "model": {"family": "brownian", "mu": 0.03, "sigma": 0.4, "q": 0.01},
    "xi": {"kind": "linear", "k": 0.1, "d": 1.0},
    "control": {"gamma1": 0.2, "gamma2": 0.6},
    "output": {},
    "simulate": {"paths": 100_000, "dt": 1e-4, "seed": 0},
}


@dataclass
class RunConfig:
    model: object
    q: float
    xi: object
    gamma1: float
    gamma2: float
    strategy: TaxStrategy
    output: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)

    @property
    def sf(self):
        return ScaleFn(self.model, self.q)


# --------------------------------------------------------------------------
# configuration


def _merge(base, extra):
    out = {key: dict(val) for key, val in base.items()}
    for key, val in extra.items():
        if isinstance(val, dict):
            out.setdefault(key, {}).update(val)
        else:
            out[key] = val
    return out


def _overrides(args):
    """Config dict built from the flags that were actually given."""
    table = {
        "model": {"family": args.family, "mu": args.mu, "sigma": args.sigma, "p": args.p,
                  "lambda": args.lam, "mu_jump": args.mu_jump, "q": args.q},
        "xi": {"k": args.k, "d": args.d},
        "control": {"gamma1": args.gamma1, "gamma2": args.gamma2},
        "output": {"path": args.output},
        "simulate": {"paths": getattr(args, "paths", None), "dt": getattr(args, "dt", None),
                     "horizon": getattr(args, "horizon", None),
                     "seed": getattr(args, "seed", None),
                     "barrier": getattr(args, "barrier", None)},
    }
    out = {sec: {k: v for k, v in vals.items() if v is not None} for sec, vals in table.items()}
    if args.k is not None or args.d is not None:
        out["xi"]["kind"] = "linear"
    if args.xi_table is not None:
        out["xi"] = {"kind": "table", "path": args.xi_table}
    return out


def _num(section, key, problems, where, default=None):
    val = section.get(key, default)
    if val is None:
        problems.append(f"{where}.{key} is required")
        return math.nan
    try:
        return float(val)
    except (TypeError, ValueError):
        problems.append(f"{where}.{key} must be a number (got {val!r})")
        return math.nan


def _problems_of(ctor, *args):
    try:
        return ctor(*args), []
    except DomainError as exc:
        return None, str(exc).split("; ")


def build_config(raw: dict, base_dir: Path = Path(".")) -> RunConfig:
    """Validate every section and raise ConfigError listing all problems."""
    problems = []
    m = raw.get("model", {})
    family = str(m.get("family", "brownian")).lower().replace("-", "_")
    q = _num(m, "q", problems, "model")
    if not q > 0:
        problems.append(f"model.q must be > 0 (got {q})")
    model = None
    if family in ("brownian", "brownian_drift", "bm"):
        mu, sigma = _num(m, "mu", problems, "model"), _num(m, "sigma", problems, "model")
        model, extra = _problems_of(BrownianDrift, mu, sigma)
        problems += [f"model: {p}" for p in extra]
    elif family in ("cramer_lundberg", "cl"):
        vals = [_num(m, key, problems, "model") for key in ("p", "lambda", "mu_jump")]
        model, extra = _problems_of(CramerLundberg, *vals)
        problems += [f"model: {p}" for p in extra]
    else:
        problems.append(f"model.family must be 'brownian' or 'cramer_lundberg' (got {family!r})")

    x = raw.get("xi", {})
    kind = str(x.get("kind", "linear")).lower()
    xi = None
    if kind == "linear":
        xi, extra = _problems_of(LinearDrawdown, _num(x, "k", problems, "xi"),
                                 _num(x, "d", problems, "xi"))
        problems += [f"xi: {p}" for p in extra]
    elif kind in ("table", "tabulated"):
        path = x.get("path")
        if path is None:
            problems.append("xi.path is required for a tabulated draw-down")
        else:
            path = Path(path)
            if not path.is_absolute():
                path = base_dir / path
            try:
                xi = TabulatedDrawdown.from_csv(path)
            except (OSError, KeyError, ValueError) as exc:
                problems.append(f"xi: cannot use table {path}: {exc}")
    else:
        problems.append(f"xi.kind must be 'linear' or 'table' (got {kind!r})")

    c = raw.get("control", {})
    g1 = _num(c, "gamma1", problems, "control")
    g2 = _num(c, "gamma2", problems, "control")
    if not 0 <= g1:
        problems.append(f"control.gamma1 must be >= 0 (got {g1})")
    if not g2 < 1:
        problems.append(
            f"control.gamma2 must be < 1 (got {g2}); exit and tax identities need "
            "0 <= gamma1 <= gamma2 < 1"
        )
    if not g1 <= g2:
        problems.append(f"control.gamma1 must be <= control.gamma2 (got {g1} > {g2})")
    strategy = None
    if not any(p.startswith("control.") for p in problems):
        rule = c.get("strategy")
        if rule is None:
            strategy = TaxStrategy(g1, g2, (), (g2,))
        else:
            strategy, extra = _problems_of(TaxStrategy, g1, g2, tuple(rule.get("breakpoints", ())),
                                           tuple(rule.get("values", ())))
            problems += [f"control.strategy: {p}" for p in extra]

    sim = raw.get("simulate", {})
    if "paths" in sim and not (isinstance(sim["paths"], int) and sim["paths"] >= 1):
        problems.append(f"simulate.paths must be an integer >= 1 (got {sim['paths']!r})")
    for key in ("dt", "horizon"):
        if key in sim and not (isinstance(sim[key], (int, float)) and sim[key] > 0):
            problems.append(f"simulate.{key} must be > 0 (got {sim[key]!r})")
    if problems:
        raise ConfigError(problems)
    return RunConfig(model, q, xi, g1, g2, strategy, dict(raw.get("output", {})), dict(sim))


def load_config(args) -> RunConfig:
    raw = {key: dict(val) for key, val in DEFAULTS.items()}
    base_dir = Path(".")
    if args.config is not None:
        path = Path(args.config)
        try:
            with open(path, "rb") as fh:
                file_cfg = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if "model" in file_cfg and "family" in file_cfg["model"]:
            raw["model"] = {"q": raw["model"]["q"]}
        raw = _merge(raw, file_cfg)
        base_dir = path.parent
    over = _overrides(args)
    if args.family is not None and args.family != raw["model"].get("family"):
        # parameters of the other family must not leak into the new one
        raw["model"] = {"q": raw["model"].get("q")}
    raw = _merge(raw, over)
    return build_config(raw, base_dir)


# --------------------------------------------------------------------------
# output helpers


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, subcommand, header, rows):
    """CSV with a versioned comment line; ``path='-'`` writes to stdout."""
    fh = sys.stdout if str(path) == "-" else open(path, "w", newline="")
    try:
        fh.write(f"# drawdown-tax v{__version__} {subcommand}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if hasattr(obj, "value"):
        return obj.value
    raise TypeError(repr(obj))


def emit_json(obj):
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
        if isinstance(v, dict):
            return {k: clean(w) for k, w in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(w) for w in v]
        return v

    print(json.dumps(clean(obj), indent=2, sort_keys=True, default=_json_default))


def _grid(args, default_max, start=0.0):
    x_max = args.x_max if args.x_max is not None else default_max
    n = args.points
    return np.linspace(start, x_max, n)


def _output(cfg, args, default):
    return args.output or cfg.output.get("path") or default


# --------------------------------------------------------------------------
# subcommands


def cmd_scale(cfg: RunConfig, args):
    sf = cfg.sf
    xs = _grid(args, 20.0)
    rows = []
    for x in xs:
        w0, w1, w2 = (float(sf.w(x, order)) for order in (0, 1, 2))
        ratio = math.inf if w0 == 0.0 else w1 / w0
        rows.append((x, w0, w1, w2, ratio))
    write_csv(_output(cfg, args, "-"), "scale", ["x", "W", "W1", "W2", "W1_over_W"], rows)
    return EXIT_OK


def _solve_report(cfg):
    return solve(cfg.sf, cfg.xi, cfg.gamma1, cfg.gamma2)


def _fd_grid(report, x_hi, n=200):
    lo = 1e-3 / report.kernel.phi
    xs = np.linspace(lo, x_hi, n)
    if report.switch_point is not None:
        xs = xs[np.abs(xs - report.switch_point) > 1e-6]
    return xs


def _solve_summary(cfg, report):
    sf = cfg.sf
    top = report.x0 if math.isfinite(report.x0) else 0.0
    hjb = hjb_residual(report, None, None, _fd_grid(report, max(4 * top, 5.0 / sf.phi_q)))
    far = (top + 100.0 / sf.phi_q)
    return {
        "case": report.case_label.value,
        "x0": report.x0,
        "switch_point": report.switch_point,
        "hjb_residual_fd": hjb.finite_difference,
        "hjb_residual_analytic": hjb.analytic,
        "upper_bound": upper_bound(sf, cfg.gamma2),
        "limit_estimate": optimal_value(report, far),
        "limit_x": far,
        "note": report.note,
        "diagnostics": report.diagnostics,
        "gamma_star": {"breakpoints": list(report.gamma_star.breakpoints),
                       "values": list(report.gamma_star.values)},
    }


def cmd_solve(cfg: RunConfig, args):
    report = _solve_report(cfg)
    summary = _solve_summary(cfg, report)
    xs = _grid(args, 30.0)
    xs = xs[xs > 0]
    rows = [(x, optimal_value(report, x), report.gamma_star(x)) for x in xs]
    out = _output(cfg, args, "solve.csv")
    write_csv(out, "solve", ["x", "f", "gamma_star"], rows)
    summary["csv"] = str(out)
    emit_json(summary)
    return EXIT_OK


def cmd_curve(cfg: RunConfig, args):
    sf = cfg.sf
    s = cfg.strategy
    xs = _grid(args, 10.0)
    xs = xs[xs > 0]
    a = args.barrier if args.barrier is not None else float(xs[-1])
    bound = upper_bound(sf, cfg.gamma2)
    rows = []
    for x in xs:
        ex = exit_laplace(sf, s, cfg.xi, x, a) if x <= a else math.nan
        rows.append((x, ex, tax_return(sf, s, cfg.xi, x), bound))
    write_csv(_output(cfg, args, "-"), "curve", ["x", "exit_laplace", "tax_return", "upper_bound"],
              rows)
    return EXIT_OK


def _sim_config(cfg, args, barrier=None, paths=None):
    sim = cfg.simulate
    return SimConfig(
        n_paths=int(paths if paths is not None else sim.get("paths", 100_000)),
        dt=float(sim.get("dt", 1e-4)),
        horizon=sim.get("horizon"),
        seed=int(sim.get("seed", 0)),
        barrier=barrier,
    )


def cmd_simulate(cfg: RunConfig, args):
    x = args.x
    barrier = cfg.simulate.get("barrier")
    if args.optimal:
        strategy = strategy_for_start(_solve_report(cfg), x)
    else:
        strategy = cfg.strategy
    quantity = args.quantity or ("exit" if barrier is not None else "tax")
    if quantity == "exit" and barrier is None:
        raise ConfigError("simulating the exit transform needs --barrier")
    sim = _sim_config(cfg, args, barrier)
    if quantity == "exit":
        est = estimate_exit(cfg.model, cfg.q, strategy, cfg.xi, x, barrier, sim)
    else:
        est = estimate_tax(cfg.model, cfg.q, strategy, cfg.xi, x, sim)
    emit_json({"quantity": quantity, "x": x, "barrier": barrier, "mean": est.mean,
               "stderr": est.stderr, "n": est.n_effective,
               "truncated_fraction": est.truncated_fraction, "seed": sim.seed})
    return EXIT_OK


def _check(name, passed, **measured):
    return {"name": name, "passed": bool(passed), **measured}


def cmd_verify(cfg: RunConfig, args):
    sf = cfg.sf
    checks = []
    # Laplace transform of W at theta = 2 Phi(q) against 1/(psi(theta) - q)
    theta = 2.0 * sf.phi_q
    end = 80.0 / sf.phi_q
    lw = integrate(lambda x: sf.w(x) * np.exp(-theta * x), 0.0, end,
                   breaks=np.linspace(0, end, 41)[1:-1], epsabs=1e-13, epsrel=1e-11)
    target = 1.0 / (laplace_exponent(cfg.model, theta) - cfg.q)
    checks.append(_check("scale_laplace_identity", abs(lw - target) <= 1e-8 * abs(target),
                         value=lw, target=target))

    xs = np.linspace(0.05, 10.0, 40)
    rates = sf.log_derivative(xs)
    checks.append(_check("rate_lower_bound", np.all(rates >= sf.phi_q - 1e-12),
                         min_rate=float(rates.min()), phi=sf.phi_q))

    report = _solve_report(cfg)
    bound = upper_bound(sf, cfg.gamma2)
    fx = optimal_value(report, xs)
    taxes = np.array([tax_return(sf, cfg.strategy, cfg.xi, x) for x in xs])
    checks.append(_check("upper_bound", max(fx.max(), taxes.max()) <= bound + 1e-10,
                         max_value=float(max(fx.max(), taxes.max())), bound=bound))
    exits = np.array([exit_laplace(sf, cfg.strategy, cfg.xi, x, 10.0) for x in xs])
    checks.append(_check("exit_in_unit_interval", np.all((exits > 0) & (exits <= 1)),
                         min_value=float(exits.min()), max_value=float(exits.max())))

    top = report.x0 if math.isfinite(report.x0) else 0.0
    hjb = hjb_residual(report, None, None, _fd_grid(report, max(4 * top, 5.0 / sf.phi_q)))
    checks.append(_check("hjb_analytic", hjb.analytic < 1e-12, residual=hjb.analytic))
    checks.append(_check("hjb_finite_difference", hjb.finite_difference < 1e-5,
                         residual=hjb.finite_difference))

    paths = args.paths if args.paths is not None else 20_000
    sim = _sim_config(cfg, args, paths=paths)
    for x in (1.0, 3.0):
        est = estimate_tax(cfg.model, cfg.q, strategy_for_start(report, x), cfg.xi, x, sim)
        target = optimal_value(report, x)
        checks.append(_check(f"mc_tax_x{x:g}", abs(est.mean - target) <= 3 * est.stderr,
                             estimate=est.mean, stderr=est.stderr, target=target))
    a = 3.0
    run = SimConfig(sim.n_paths, sim.dt, sim.horizon, sim.seed, a)
    est = estimate_exit(cfg.model, cfg.q, cfg.strategy, cfg.xi, 1.0, a, run)
    target = exit_laplace(sf, cfg.strategy, cfg.xi, 1.0, a)
    checks.append(_check("mc_exit_x1_a3", abs(est.mean - target) <= 3 * est.stderr,
                         estimate=est.mean, stderr=est.stderr, target=target))

    ok = all(c["passed"] for c in checks)
    emit_json({"passed": ok, "checks": checks, "case": report.case_label.value})
    return EXIT_OK if ok else EXIT_GATE


def cmd_reproduce(cfg: RunConfig, args):
    out = Path(args.output_dir or cfg.output.get("dir", "reproduce"))
    out.mkdir(parents=True, exist_ok=True)
    sf = cfg.sf
    d = cfg.xi.d if isinstance(cfg.xi, LinearDrawdown) else 1.0
    xs = np.linspace(0.05, 20.0, args.points)

    ks = (-10.0, -5.0, -1.0, 0.0, 0.1)
    g_rows = zip(xs, *[g_fn(sf, LinearDrawdown(k, d), xs) for k in ks])
    write_csv(out / "g_curves.csv", "reproduce", ["x"] + [f"g_k{k:g}" for k in ks], g_rows)

    pairs = ((0.1, d), (-1.0, d))
    g2_cols = [[G2(sf, LinearDrawdown(k, dd), cfg.gamma2, x) for x in xs] for k, dd in pairs]
    write_csv(out / "G2_curves.csv", "reproduce",
              ["x"] + [f"G2_k{k:g}_d{dd:g}" for k, dd in pairs], zip(xs, *g2_cols))

    fx = np.linspace(0.05, 200.0, args.points)
    for k, dd in pairs:
        report = solve(sf, LinearDrawdown(k, dd), cfg.gamma1, cfg.gamma2)
        rows = [(x, optimal_value(report, x), report.gamma_star(x)) for x in fx]
        write_csv(out / f"value_k{k:g}_d{dd:g}.csv", "reproduce", ["x", "f", "gamma_star"], rows)
    emit_json({"output_dir": str(out), "files": sorted(p.name for p in out.glob("*.csv"))})
    return EXIT_OK


COMMANDS = {
    "scale": cmd_scale,
    "solve": cmd_solve,
    "curve": cmd_curve,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "reproduce": cmd_reproduce,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--family", choices=["brownian", "cramer_lundberg"])
    common.add_argument("--mu", type=float, help="Brownian drift")
    common.add_argument("--sigma", type=float, help="Brownian volatility")
    common.add_argument("--p", type=float, help="Cramer-Lundberg premium rate")
    common.add_argument("--lam", type=float, help="claim intensity")
    common.add_argument("--mu-jump", type=float, help="reciprocal mean claim size")
    common.add_argument("--q", type=float, help="discount rate")
    common.add_argument("--k", type=float, help="linear draw-down slope")
    common.add_argument("--d", type=float, help="linear draw-down offset")
    common.add_argument("--xi-table", help="CSV with columns x, xi, xi_prime")
    common.add_argument("--gamma1", type=float)
    common.add_argument("--gamma2", type=float)
    common.add_argument("--output", "-o", help="output file ('-' for stdout)")
    common.add_argument("--x-max", type=float, help="upper end of the x grid")
    common.add_argument("--points", type=int, default=101, help="number of grid points")

    parser = argparse.ArgumentParser(prog="drawdown-tax", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"drawdown-tax {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("scale", parents=[common], help="tabulate W, W', W'' and W'/W")
    sub.add_parser("solve", parents=[common], help="classify the case and solve for f and gamma*")
    curve = sub.add_parser("curve", parents=[common],
                           help="exit transform and tax return for the configured strategy")
    curve.add_argument("--barrier", type=float, help="upper barrier a for the exit transform")

    def sim_flags(p):
        p.add_argument("--paths", type=int)
        p.add_argument("--dt", type=float)
        p.add_argument("--horizon", type=float)
        p.add_argument("--seed", type=int)

    sim = sub.add_parser("simulate", parents=[common], help="Monte-Carlo estimate")
    sim_flags(sim)
    sim.add_argument("--barrier", type=float)
    sim.add_argument("--x", type=float, default=1.0, help="initial surplus")
    sim.add_argument("--quantity", choices=["exit", "tax"])
    sim.add_argument("--optimal", action="store_true",
                     help="simulate under the solved optimal strategy")
    ver = sub.add_parser("verify", parents=[common], help="run the verification gates")
    sim_flags(ver)
    rep = sub.add_parser("reproduce", parents=[common],
                         help="write the g, G2 and value-function curves")
    rep.add_argument("--output-dir")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        cfg = load_config(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_USAGE
    except AssumptionViolated as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        if exc.pattern is not None:
            print(json.dumps({"pattern": exc.pattern.pattern.value,
                              "crossings": exc.pattern.crossings}), file=sys.stderr)
        return EXIT_ASSUMPTION
    except DrawdownTaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
