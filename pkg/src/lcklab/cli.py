"""Batch command-line frontend.

Exit status: 0 when every asserted predicate holds, 1 for usage or input
errors, 2 when a solver does not converge, 3 when a run completes but an
asserted predicate is false.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import hopf_model as hm
from . import oracle
from .chart_calculus import GridError, GridSpec, ScalarField, ddc, fubini_study_reference
from .expressions import ExpressionError
from .fieldio import FormatError, emit_report, read_problem, write_field
from .transverse_ma import (
    CalabiProblem,
    SolverConfig,
    kernel_check,
    random_band_limited,
    solve_aubin,
    solve_calabi,
    uniqueness_check,
)

EXIT_OK, EXIT_INPUT, EXIT_NONCONV, EXIT_PREDICATE = 0, 1, 2, 3
INIT_AMPLITUDE = 0.3

log = logging.getLogger("lcklab")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _threads() -> int:
    raw = os.environ.get("LCK_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"LCK_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise UsageError("LCK_THREADS must be >= 0")
    return n


def _map_samples(fn, s: hm.AmbientSample, threads: int):
    """Apply ``fn`` to chunks of the sample batch; chunk results in order."""
    if threads <= 1 or len(s) < 2:
        return [fn(s)]
    chunks = [hm.AmbientSample(c, s.h_amb) for c in np.array_split(s.x, min(threads, len(s)))]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, chunks))


def _potential(model: str, n: int, q: float) -> hm.AutomorphicPotential:
    if model == "standard":
        return hm.AutomorphicPotential.standard(n, q)
    if model == "nonautomorphic":
        return hm.AutomorphicPotential.non_automorphic(n, q)
    if model.startswith("expr:"):
        return hm.AutomorphicPotential(n, q, model[5:])
    raise UsageError(f"unknown model {model!r} (standard | expr:<string>)")


def _config(args) -> SolverConfig:
    cfg = SolverConfig(seed=args.seed if args.seed is not None else 0)
    if args.tol is not None:
        cfg = dataclasses.replace(cfg, tol_newton=args.tol)
    return cfg


def _problem(args) -> tuple[CalabiProblem, SolverConfig]:
    if getattr(args, "problem", None):
        pf = read_problem(args.problem)
        cfg = pf.config
        if args.tol is not None:
            cfg = dataclasses.replace(cfg, tol_newton=args.tol)
        return CalabiProblem(pf.f, fubini_study_reference(pf.grid)), cfg
    grid = GridSpec(args.N, args.R)
    return CalabiProblem.from_expression(args.f, grid), _config(args)


def _init(args, grid: GridSpec, amplitude: float = INIT_AMPLITUDE) -> ScalarField | None:
    if args.seed is None:
        return None
    return random_band_limited(grid, amplitude, args.seed)


def _params(args) -> dict:
    skip = {"verb", "func", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _solve_report(command: str, args, rep) -> dict:
    d = {"command": command, "params": _params(args)}
    d.update({
        "lambda": rep.lam,
        "iterations": rep.iterations,
        "residual_sup": rep.residual,
        "gauge": rep.gauge,
        "converged": rep.converged,
        "wall_ms": rep.wall_ms if args.timing else 0.0,
    })
    if rep.message:
        d["message"] = rep.message
    return d


# ---------------------------------------------------------------------------
# verbs


def cmd_verify(args) -> tuple[dict, int]:
    p = _potential(args.model, args.n, args.q)
    s = hm.AmbientSample.random(args.n, args.q, args.samples, args.seed or 0, args.fd_step)
    thresholds = dict(hm.VERIFY_THRESHOLDS)
    thresholds.pop("ricci")
    parts = _map_samples(lambda c: hm.verify(p, c, thresholds), s, _threads())
    values = {k: max(r.values[k] for r in parts) for k in parts[0].values}
    eta = _map_samples(lambda c: hm.eta_check(p, c), s, _threads())
    values["eta_two_path"] = max(e.two_path for e in eta)
    thresholds["eta_two_path"] = 1e-6
    tol_ew = args.tol if args.tol is not None else hm.TOL_EW
    passed = {k: values[k] <= thresholds[k] for k in thresholds}
    report = {
        "command": "verify",
        "params": _params(args),
        "residuals": values,
        "thresholds": thresholds,
        "passed": passed,
        "einstein_weyl": values["ricci"] <= tol_ew,
        "tol_ew": tol_ew,
    }
    return report, EXIT_OK if all(passed.values()) else EXIT_PREDICATE


def cmd_solve_calabi(args) -> tuple[dict, int]:
    prob, cfg = _problem(args)
    u, rep = solve_calabi(prob, cfg, _init(args, prob.grid))
    if args.field_out:
        write_field(u, args.field_out)
    return _solve_report("solve-calabi", args, rep), EXIT_OK if rep.converged else EXIT_NONCONV


def cmd_solve_aubin(args) -> tuple[dict, int]:
    prob, cfg = _problem(args)
    amp = INIT_AMPLITUDE if args.eps < 1 else 0.1
    try:
        psi, rep = solve_aubin(args.eps, prob, cfg, _init(args, prob.grid, amp))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.field_out:
        write_field(psi, args.field_out)
    report = _solve_report("solve-aubin", args, rep)
    report["continuation"] = rep.trace
    return report, EXIT_OK if rep.converged else EXIT_NONCONV


def cmd_uniqueness(args) -> tuple[dict, int]:
    if args.inits < 2:
        raise UsageError("--inits must be at least 2")
    prob, cfg = _problem(args)
    base = 0 if args.seed is None else args.seed
    sols, reps = [], []
    for k in range(args.inits):
        u, rep = solve_calabi(prob, cfg, random_band_limited(prob.grid, INIT_AMPLITUDE, base + k))
        sols.append(u)
        reps.append(rep)
    verdicts = [uniqueness_check(sols[0], v, prob) for v in sols[1:]]
    report = {
        "command": "uniqueness",
        "params": _params(args),
        "seeds": [base + k for k in range(args.inits)],
        "converged": [r.converged for r in reps],
        "residual_sup": [r.residual for r in reps],
        "sup_diff": max(v.psi_oscillation for v in verdicts),
        "d_sup": max(v.d_sup for v in verdicts),
        "verdict": "unique" if all(v.unique for v in verdicts) else
                   ("inapplicable" if any(v.verdict == "inapplicable" for v in verdicts) else "not-unique"),
    }
    if not all(r.converged for r in reps):
        return report, EXIT_NONCONV
    return report, EXIT_OK if report["verdict"] == "unique" else EXIT_PREDICATE


def cmd_kernel(args) -> tuple[dict, int]:
    grid = GridSpec(args.N, args.R)
    alpha = fubini_study_reference(grid)
    if args.alpha:
        alpha = alpha + ddc(ScalarField.from_expression(args.alpha, grid))
    if not alpha.is_positive():
        raise UsageError("alpha = eta0 + dd^c(alpha-expr) is not positive")
    k = kernel_check(alpha)
    ok = k.constant_cosine >= 1 - 1e-8 and k.singular_values[1] > 0 and k.singular_values[0] <= 1e-8
    report = {
        "command": "kernel",
        "params": _params(args),
        "singular_values": list(k.singular_values),
        "constant_cosine": k.constant_cosine,
        "size": k.size,
        "passed": ok,
    }
    return report, EXIT_OK if ok else EXIT_PREDICATE


def cmd_oracle_gen(args) -> tuple[dict, int]:
    sol = oracle.solve_radial(oracle.RadialProblem.from_expression(args.f))
    table = oracle.regression_table(sol)
    if args.table_out:
        oracle.write_oracle(args.table_out, table)
    report = {
        "command": "oracle-gen",
        "params": _params(args),
        "lambda": sol.lam,
        "residual_sup": sol.residual,
        "table": [[r, u] for r, u in table],
    }
    return report, EXIT_OK


def cmd_selftest(args) -> tuple[dict, int]:
    suite = Path(__file__).resolve().parents[2] / "tests" / "test_acceptance.py"
    if not suite.exists():
        raise UsageError(f"acceptance suite not found at {suite}")
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-s", str(suite)],
                          capture_output=True, text=True)
    # each verdict appears inline and again in the terminal summary
    lines = list(dict.fromkeys(l for l in proc.stdout.splitlines() if l.startswith(("PASS", "FAIL"))))
    report = {"command": "selftest", "params": _params(args), "criteria": lines,
              "passed": proc.returncode == 0}
    return report, EXIT_OK if proc.returncode == 0 else EXIT_PREDICATE


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", help="report path (default: stdout)")
    common.add_argument("--seed", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--timing", action="store_true", help="record wall_ms (reports are then not reproducible)")
    common.add_argument("-v", "--verbose", action="store_true")

    grid = _Parser(add_help=False)
    grid.add_argument("--N", type=int, default=64)
    grid.add_argument("--R", type=float, default=1.5)

    solve = _Parser(add_help=False, parents=[grid])
    src = solve.add_mutually_exclusive_group()
    src.add_argument("--f", default="0", help="density exponent in the expression language")
    src.add_argument("--problem", help="LCKMA1 problem file")
    solve.add_argument("--field-out", help="write the solution as an LCKF1 file")

    p = _Parser(prog="lcklab", description="LCK geometry on Hopf manifolds")
    sub = p.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    v = sub.add_parser("verify", parents=[common])
    v.add_argument("--model", default="standard")
    v.add_argument("--n", type=int, default=2)
    v.add_argument("--q", type=float, default=2.0)
    v.add_argument("--samples", type=int, default=100)
    v.add_argument("--fd-step", type=float, default=hm.H_AMB)
    v.set_defaults(func=cmd_verify)

    c = sub.add_parser("solve-calabi", parents=[common, solve])
    c.set_defaults(func=cmd_solve_calabi)

    a = sub.add_parser("solve-aubin", parents=[common, solve])
    a.add_argument("--eps", type=float, required=True, choices=[-1.0, 0.0, 1.0])
    a.set_defaults(func=cmd_solve_aubin)

    u = sub.add_parser("uniqueness", parents=[common, solve])
    u.add_argument("--inits", type=int, default=2)
    u.set_defaults(func=cmd_uniqueness)

    k = sub.add_parser("kernel", parents=[common])
    k.add_argument("--N", type=int, default=32)
    k.add_argument("--R", type=float, default=1.5)
    k.add_argument("--alpha", default="", help="alpha = eta0 + dd^c(expr)")
    k.set_defaults(func=cmd_kernel)

    o = sub.add_parser("oracle-gen", parents=[common])
    o.add_argument("--f", required=True)
    o.add_argument("--table-out", help="write the ORACLE1 regression table")
    o.set_defaults(func=cmd_oracle_gen)

    s = sub.add_parser("selftest", parents=[common])
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        report, status = args.func(args)
        text = emit_report(report, args.out)
        if args.out is None:
            sys.stdout.write(text)
    except (UsageError, FormatError, ExpressionError, GridError, hm.NotLCKError,
            hm.AnalyticModeRequired) as exc:
        print(f"lcklab: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"lcklab: error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"lcklab: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    return status


if __name__ == "__main__":
    sys.exit(main())
