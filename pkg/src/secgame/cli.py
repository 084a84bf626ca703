"""Command-line interface: solve, sweep, verify and gradcheck.

Scenario files are JSON documents with top-level keys ``model``, ``initial``
and ``solver``; unknown keys are rejected with the offending path.  Exit
codes: 0 success, 2 non-convergence, 3 validation error, 4 verification
failure.  Sweep CSV columns are
param,u_1..u_m,Q_1_1..Q_m_n,lambda_1..lambda_m,EU_1..EU_m,residual,iters,converged
with full-precision decimal numbers; identical invocations produce
byte-identical files.  SECGAME_THREADS caps sweep parallelism (default 1,
which keeps warm starting on).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .model import MarketParams, ModelSpec, RetailerParams, TransactionCostParams
from .scenarios import (BUILTIN_SCENARIOS, BUILTIN_SWEEPS, REFERENCE_TARGETS, Scenario,
                        SweepSpec, builtin_sweep, find_crossing, reconciliation_report,
                        run_sweep, scenario_by_name, solve_scenario)
from .solver import SolverConfig, verify_equilibrium
from .vi import DecisionVector, ViProblem, fd_check_random

EXIT_OK = 0
EXIT_NO_CONVERGENCE = 2
EXIT_VALIDATION = 3
EXIT_VERIFICATION = 4


class SchemaError(ValueError):
    """A scenario document violated the schema; the path names the culprit."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


def _check_keys(obj, path, required, optional=()):
    if not isinstance(obj, dict):
        raise SchemaError(path, "expected an object")
    allowed = set(required) | set(optional)
    for key in obj:
        if key not in allowed:
            raise SchemaError(f"{path}.{key}", "unknown key")
    for key in required:
        if key not in obj:
            raise SchemaError(f"{path}.{key}", "missing required key")


def _number(obj, path):
    if not isinstance(obj, (int, float)) or isinstance(obj, bool):
        raise SchemaError(path, "expected a number")
    return float(obj)


def _integer(obj, path):
    if not isinstance(obj, int) or isinstance(obj, bool):
        raise SchemaError(path, "expected an integer")
    return obj


def _array(obj, path):
    if not isinstance(obj, list):
        raise SchemaError(path, "expected an array")
    return obj


def scenario_from_data(data, name="scenario"):
    """Validate a parsed scenario document and build the Scenario."""
    _check_keys(data, name, required=("model",), optional=("initial", "solver"))
    mdata = data["model"]
    mpath = f"{name}.model"
    _check_keys(mdata, mpath, required=("m", "n", "retailers", "markets"),
                optional=("q_upper", "loss_gradient_includes_multiplier"))
    m = _integer(mdata["m"], f"{mpath}.m")
    n = _integer(mdata["n"], f"{mpath}.n")

    retailers = []
    for i, rdata in enumerate(_array(mdata["retailers"], f"{mpath}.retailers")):
        rpath = f"{mpath}.retailers[{i}]"
        _check_keys(rdata, rpath, required=("c", "B", "D", "t", "mu", "costs"))
        costs = []
        for j, cdata in enumerate(_array(rdata["costs"], f"{rpath}.costs")):
            cpath = f"{rpath}.costs[{j}]"
            _check_keys(cdata, cpath, required=("a", "b", "s"))
            costs.append(TransactionCostParams(a=_number(cdata["a"], f"{cpath}.a"),
                                               b=_number(cdata["b"], f"{cpath}.b"),
                                               s=_number(cdata["s"], f"{cpath}.s")))
        try:
            retailers.append(RetailerParams(c=_number(rdata["c"], f"{rpath}.c"),
                                            B=_number(rdata["B"], f"{rpath}.B"),
                                            D=_number(rdata["D"], f"{rpath}.D"),
                                            t=_number(rdata["t"], f"{rpath}.t"),
                                            mu=_number(rdata["mu"], f"{rpath}.mu"),
                                            costs=tuple(costs)))
        except ValueError as exc:
            raise SchemaError(rpath, str(exc)) from exc

    markets = []
    for i, kdata in enumerate(_array(mdata["markets"], f"{mpath}.markets")):
        kpath = f"{mpath}.markets[{i}]"
        _check_keys(kdata, kpath, required=("alpha", "gamma", "kappa"))
        try:
            markets.append(MarketParams(alpha=_number(kdata["alpha"], f"{kpath}.alpha"),
                                        gamma=_number(kdata["gamma"], f"{kpath}.gamma"),
                                        kappa=_number(kdata["kappa"], f"{kpath}.kappa")))
        except ValueError as exc:
            raise SchemaError(kpath, str(exc)) from exc

    kwargs = {}
    if "q_upper" in mdata:
        kwargs["q_upper"] = _number(mdata["q_upper"], f"{mpath}.q_upper")
    if "loss_gradient_includes_multiplier" in mdata:
        flag = mdata["loss_gradient_includes_multiplier"]
        if not isinstance(flag, bool):
            raise SchemaError(f"{mpath}.loss_gradient_includes_multiplier",
                              "expected true or false")
        kwargs["loss_gradient_includes_multiplier"] = flag
    try:
        model = ModelSpec(m=m, n=n, retailers=tuple(retailers), markets=tuple(markets),
                          **kwargs)
    except ValueError as exc:
        raise SchemaError(mpath, str(exc)) from exc

    if "initial" in data:
        idata = data["initial"]
        ipath = f"{name}.initial"
        _check_keys(idata, ipath, required=("Q", "u", "lambda"))
        try:
            x0 = DecisionVector(np.array(idata["Q"], dtype=float),
                                np.array(idata["u"], dtype=float),
                                np.array(idata["lambda"], dtype=float))
        except (TypeError, ValueError) as exc:
            raise SchemaError(ipath, str(exc)) from exc
    else:
        x0 = DecisionVector(np.ones((m, n)), np.zeros(m), np.zeros(m))

    config = SolverConfig()
    if "solver" in data:
        sdata = data["solver"]
        spath = f"{name}.solver"
        _check_keys(sdata, spath, required=(),
                    optional=("beta0", "nu", "mu", "rho", "tol", "max_iter"))
        fields = {}
        for key in ("beta0", "nu", "mu", "rho", "tol"):
            if key in sdata:
                fields[key] = _number(sdata[key], f"{spath}.{key}")
        if "max_iter" in sdata:
            fields["max_iter"] = _integer(sdata["max_iter"], f"{spath}.max_iter")
        try:
            config = SolverConfig(**fields)
        except ValueError as exc:
            raise SchemaError(spath, str(exc)) from exc

    try:
        return Scenario(name, model, x0, config)
    except ValueError as exc:
        raise SchemaError(name, str(exc)) from exc


def load_scenario(source):
    """Resolve a builtin name or JSON file path into a Scenario."""
    if source in BUILTIN_SCENARIOS:
        return scenario_by_name(source)
    try:
        with open(source, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise SchemaError(source, f"cannot read scenario file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(source, f"invalid JSON: {exc}") from exc
    return scenario_from_data(data, name=os.path.basename(source))


def scenario_to_data(scenario: Scenario):
    """Serialize a scenario to the document form accepted by load_scenario."""
    model = scenario.model
    return {
        "model": {
            "m": model.m,
            "n": model.n,
            "q_upper": model.q_upper,
            "loss_gradient_includes_multiplier": model.loss_gradient_includes_multiplier,
            "retailers": [
                {"c": r.c, "B": r.B, "D": r.D, "t": r.t, "mu": r.mu,
                 "costs": [{"a": tc.a, "b": tc.b, "s": tc.s} for tc in r.costs]}
                for r in model.retailers
            ],
            "markets": [
                {"alpha": mk.alpha, "gamma": mk.gamma, "kappa": mk.kappa}
                for mk in model.markets
            ],
        },
        "initial": {
            "Q": scenario.x0.Q.tolist(),
            "u": scenario.x0.u.tolist(),
            "lambda": scenario.x0.lam.tolist(),
        },
        "solver": {
            "beta0": scenario.config.beta0,
            "nu": scenario.config.nu,
            "mu": scenario.config.mu,
            "rho": scenario.config.rho,
            "tol": scenario.config.tol,
            "max_iter": scenario.config.max_iter,
        },
    }


def _num(v):
    """Full-precision, locale-independent decimal text for one number."""
    return repr(float(v))


def _solution_fields(model, point, eu, residual, iterations, converged):
    cells = [_num(point.u[i]) for i in range(model.m)]
    cells += [_num(point.Q[i, j]) for i in range(model.m) for j in range(model.n)]
    cells += [_num(point.lam[i]) for i in range(model.m)]
    cells += [_num(eu[i]) for i in range(model.m)]
    cells += [_num(residual), str(int(iterations)), "true" if converged else "false"]
    return cells


def _solution_header(model):
    cols = [f"u_{i + 1}" for i in range(model.m)]
    cols += [f"Q_{i + 1}_{j + 1}" for i in range(model.m) for j in range(model.n)]
    cols += [f"lambda_{i + 1}" for i in range(model.m)]
    cols += [f"EU_{i + 1}" for i in range(model.m)]
    cols += ["residual", "iters", "converged"]
    return cols


def _write_lines(path, lines):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _print_solution_table(scenario, point, eu, report, out=None):
    out = out if out is not None else sys.stdout
    model = scenario.model
    print(f"scenario: {scenario.name}  ({model.m} retailers x {model.n} markets)",
          file=out)
    status = "yes" if report.converged else "NO"
    print(f"converged: {status}   residual: {report.final_residual:.3e}   "
          f"iterations: {report.iterations}   beta retries: {report.beta_retries}",
          file=out)
    header = f"{'retailer':>8} {'u':>12} {'lambda':>12} {'E(U)':>14}  " + "  ".join(
        f"{'Q->mkt ' + str(j + 1):>12}" for j in range(model.n))
    print(header, file=out)
    for i in range(model.m):
        qvals = "  ".join(f"{point.Q[i, j]:12.6f}" for j in range(model.n))
        print(f"{i + 1:>8} {point.u[i]:12.6f} {point.lam[i]:12.6f} "
              f"{eu[i]:14.4f}  {qvals}", file=out)
    print(f"network mean security: {point.u.mean():.6f}", file=out)


def cmd_solve(args):
    scenario = load_scenario(args.scenario)
    problem, report = solve_scenario(scenario, record_trace=args.trace is not None)
    point = problem.split(report.solution)
    eu = np.array([scenario.model.expected_utility(i, point.Q, point.u)
                   for i in range(scenario.model.m)])
    _print_solution_table(scenario, point, eu, report)
    if scenario.name in REFERENCE_TARGETS:
        print(reconciliation_report(scenario, point, report))
    if args.out:
        header = _solution_header(scenario.model)
        row = _solution_fields(scenario.model, point, eu, report.final_residual,
                               report.iterations, report.converged)
        _write_lines(args.out, [",".join(header), ",".join(row)])
    if args.trace is not None:
        lines = ["iteration,residual,beta,r"]
        lines += [f"{k},{_num(res)},{_num(beta)},{_num(r)}"
                  for k, (res, beta, r) in enumerate(report.trace)]
        _write_lines(args.trace, lines)
    return EXIT_OK if report.converged else EXIT_NO_CONVERGENCE


def _sweep_csv_lines(result):
    model = result.spec.scenario.model
    header = ["param"] + _solution_header(model)
    lines = [",".join(header)]
    for row in result.rows:
        cells = [_num(row.value)] + _solution_fields(model, DecisionVector(
            row.Q, row.u, row.lam), row.eu, row.residual, row.iterations, row.converged)
        lines.append(",".join(cells))
    return lines


def cmd_sweep(args):
    if args.name:
        if args.name not in BUILTIN_SWEEPS:
            raise SchemaError(args.name,
                              f"unknown sweep; builtins: {list(BUILTIN_SWEEPS)}")
        spec = builtin_sweep(args.name)
    else:
        if args.param is None or args.start is None or args.stop is None:
            raise SchemaError("sweep", "custom sweeps need --param, --from and --to")
        base = load_scenario(args.scenario)
        coupling = "shares" if args.param.startswith("t") else "direct"
        try:
            spec = SweepSpec(base, args.param, args.start, args.stop, args.steps,
                             coupling=coupling)
        except ValueError as exc:
            raise SchemaError("sweep", str(exc)) from exc

    threads = max(1, int(os.environ.get("SECGAME_THREADS", "1")))
    result = run_sweep(spec, threads=threads)
    lines = _sweep_csv_lines(result)
    if args.out:
        _write_lines(args.out, lines)
    else:
        for line in lines:
            print(line)

    info = sys.stdout if args.out else sys.stderr
    model = spec.scenario.model
    for i in range(model.m):
        for j in range(i + 1, model.m):
            crossing = find_crossing(result, f"u_{i + 1}", f"u_{j + 1}")
            if crossing is not None:
                print(f"crossing u{i + 1}=u{j + 1} at {spec.param}~{crossing:.4f}",
                      file=info)
            else:
                print(f"no crossing of u{i + 1} and u{j + 1} in "
                      f"[{spec.start}, {spec.stop}]", file=info)
    all_ok = all(r.converged for r in result.rows)
    return EXIT_OK if all_ok else EXIT_NO_CONVERGENCE


def cmd_verify(args):
    scenario = load_scenario(args.scenario)
    problem, report = solve_scenario(scenario)
    if not report.converged:
        print(f"solve did not converge (residual {report.final_residual:.3e})")
        return EXIT_NO_CONVERGENCE
    point = problem.split(report.solution)
    audit = verify_equilibrium(scenario.model, point, grid_density=args.grid,
                               eps_br=args.eps)
    for i, gain in enumerate(audit.improvements):
        print(f"retailer {i + 1}: best unilateral improvement {gain:.6e}")
    if audit.certified:
        print(f"equilibrium certified at grid density {args.grid} "
              f"(threshold {audit.eps_br:g})")
        return EXIT_OK
    print(f"equilibrium NOT certified: improvement above {audit.eps_br:g}")
    return EXIT_VERIFICATION


def cmd_gradcheck(args):
    if args.points < 1:
        raise SchemaError("--points", "must be a positive integer")
    scenario = load_scenario(args.scenario)
    model = scenario.model
    if args.variant == "literal-eq13":
        model = replace(model, loss_gradient_includes_multiplier=False)
    problem = ViProblem(model)
    report = fd_check_random(problem, points=args.points, step=args.step)
    print(f"gradient check over {args.points} interior points: {report}")
    if report.max_rel_error > 1e-5:
        print("FAIL: operator disagrees with finite differences")
        return EXIT_VERIFICATION
    print("PASS")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="secgame",
        description="Equilibrium solver for the retailer cybersecurity "
                    "investment game")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a scenario and print the equilibrium")
    p_solve.add_argument("scenario", help="builtin name (exp1, exp5) or JSON file")
    p_solve.add_argument("--out", help="write the solution row as CSV")
    p_solve.add_argument("--trace", help="write per-iteration CSV trace")
    p_solve.add_argument("--dump", action="store_true",
                         help="print the resolved scenario JSON and exit")

    p_sweep = sub.add_parser("sweep", help="solve along a parameter grid, emit CSV")
    p_sweep.add_argument("name", nargs="?", default=None,
                         help="builtin sweep name (exp2, exp3, exp4)")
    p_sweep.add_argument("--scenario", default="exp1",
                         help="base scenario for custom sweeps (default exp1)")
    p_sweep.add_argument("--param", help="parameter path, e.g. B1, D1, t1")
    p_sweep.add_argument("--from", dest="start", type=float, help="first grid value")
    p_sweep.add_argument("--to", dest="stop", type=float, help="last grid value")
    p_sweep.add_argument("--steps", type=int, default=31, help="grid points")
    p_sweep.add_argument("--out", help="CSV output path (default: stdout)")

    p_verify = sub.add_parser("verify", help="audit a solved scenario by grid search")
    p_verify.add_argument("scenario", help="builtin name or JSON file")
    p_verify.add_argument("--grid", type=int, default=50, help="grid density")
    p_verify.add_argument("--eps", type=float, default=1e-3,
                          help="certification threshold")

    p_grad = sub.add_parser("gradcheck",
                            help="compare the operator against finite differences")
    p_grad.add_argument("scenario", help="builtin name or JSON file")
    p_grad.add_argument("--points", type=int, default=100, help="sample points")
    p_grad.add_argument("--step", type=float, default=1e-5, help="difference step")
    p_grad.add_argument("--variant", choices=("default", "literal-eq13"),
                        default="default", help="loss-gradient variant to check")

    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; map onto the validation code.
        return EXIT_VALIDATION if exc.code not in (0, None) else 0

    try:
        if args.command == "solve":
            if args.dump:
                scenario = load_scenario(args.scenario)
                print(json.dumps(scenario_to_data(scenario), indent=2))
                return EXIT_OK
            return cmd_solve(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "gradcheck":
            return cmd_gradcheck(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    parser.error(f"unknown command {args.command!r}")
    return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
