"""``scpkit`` command line: simulate, scp-study, contraction, check.

Exit codes: 0 success, 1 usage error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import os
import sys
import time

import numpy as np

from . import diagnostics, hovercraft as hv
from .convex import SolverConfig, build_subproblem
from .errors import ScpError, UsageError
from .problem import ConvexSet, NonlinearMap, ParametricProblem, check_jacobian, jacobian_error_location, slater_check
from .problem_io import load_problem, problem_from_dict
from .rtscp import ApproximateScp, write_records_csv, write_records_jsonl
from .scp import CONVERGED, ScpConfig, convergence_ratios, solve_scp

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

log = logging.getLogger("scpkit")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text, count, flag):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"{flag}: expected {count} comma-separated numbers, got {text!r}")
    if len(vals) != count:
        raise UsageError(f"{flag}: expected {count} values, got {len(vals)}")
    return vals


def _add_common(p):
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--trace", action="store_true", help="write an IPM trace CSV of the last subproblem solve")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_ocp(p):
    p.add_argument("--dt", type=float, default=hv.DT)
    p.add_argument("--n", type=int, default=hv.HORIZON, help="prediction horizon N")
    p.add_argument("--x-init", default=",".join(repr(float(v)) for v in hv.XI0))
    p.add_argument("--weights-q", default=None)
    p.add_argument("--weights-r", default=None)
    p.add_argument("--weights-s", default=None)
    p.add_argument("--mode", choices=[hv.SLACK, hv.QUADRATIC], default=hv.SLACK)


def build_parser():
    ap = _Parser(prog="scpkit", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="closed-loop RTSCP MPC of the hovercraft")
    _add_common(p)
    _add_ocp(p)
    p.add_argument("--plant", choices=["rk4", "euler"], default="rk4")
    p.add_argument("--horizon", type=float, default=15.0, help="simulated seconds")
    p.add_argument("--stop-radius", type=float, default=0.01)
    p.add_argument("--warmup", type=int, default=10, help="approximate SCP iterations at the first sample")
    p.add_argument("--run-to-horizon", action="store_true")
    p.add_argument("--timing", action="store_true", help="record wall-clock solve times in the CSVs")

    p = sub.add_parser("scp-study", help="full-step SCP at a fixed parameter with convergence ratios")
    _add_common(p)
    _add_ocp(p)
    p.add_argument("--problem", default="hovercraft", help="hovercraft, linear, or a JSON problem file")
    p.add_argument("--xi", default=None, help="parameter for non-hovercraft problems (comma list)")

    p = sub.add_parser("contraction", help="tracking error of RTSCP against exact references")
    _add_common(p)
    _add_ocp(p)
    p.add_argument("--replay", default=None, help="simulation CSV whose measured states form the trajectory")
    p.add_argument("--xi-end", default=None, help="synthetic trajectory end state (default: origin)")
    p.add_argument("--samples", type=int, default=40, help="synthetic trajectory length")
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--oracle-tol", type=float, default=1e-12)

    p = sub.add_parser("check", help="finite-difference Jacobian and Slater checks")
    _add_common(p)
    _add_ocp(p)
    p.add_argument("--problems", nargs="*", default=["hovercraft"],
                   help="hovercraft, linear, planted_bug, or JSON problem files")
    p.add_argument("--points", type=int, default=100)
    return ap


# -- shared helpers -----------------------------------------------------------

def _weights(args):
    kw = {}
    for name, flag, n in (("Q", "weights_q", 6), ("R", "weights_r", 2), ("S", "weights_s", 6)):
        val = getattr(args, flag)
        if val is not None:
            kw[name] = tuple(_floats(val, n, "--" + flag.replace("_", "-")))
    return hv.OcpWeights(**kw)


def _validate_ocp(args):
    if args.n < 1:
        raise UsageError(f"--n: horizon must be >= 1, got {args.n}")
    if not args.dt > 0:
        raise UsageError(f"--dt: must be positive, got {args.dt}")
    if args.max_iters is not None and args.max_iters < 1:
        raise UsageError(f"--max-iters: must be >= 1, got {args.max_iters}")
    if args.tol is not None and not args.tol > 0:
        raise UsageError(f"--tol: must be positive, got {args.tol}")
    return _weights(args), np.array(_floats(args.x_init, 6, "--x-init"))


def _solver_config(args, trace_name="ipm_trace.csv", use_tol=True, use_iters=True):
    kw = {}
    if use_tol and args.tol is not None:
        kw["kkt_tolerance"] = args.tol
    if use_iters and args.max_iters is not None:
        kw["max_iterations"] = args.max_iters
    if args.trace:
        kw["trace_path"] = os.path.join(args.out, trace_name)
    return SolverConfig(**kw)


def _outdir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"--out: cannot create {path}: {exc}")
    if not os.access(path, os.W_OK):
        raise UsageError(f"--out: {path} is not writable")
    return path


def _dump(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)


def _stamp():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def linear_test_problem():
    """Small problem with affine ``g``; SCP solves it in one iteration."""
    A = np.array([[1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 0.0, 2.0]])
    return ParametricProblem(
        c=np.array([1.0, -1.0, 0.5, 0.0]), g=NonlinearMap.linear(A), M=-np.eye(2),
        omega=ConvexSet.box(-np.ones(4), np.ones(4)), H=0.1 * np.eye(4), name="linear_test",
    )


def planted_bug_problem():
    return problem_from_dict({"builder": "planted_bug", "c": [1.0], "M": [], "p": 0,
                              "omega": {"lower": [0.0], "upper": [2.0]}})


def _named_problem(name, args, weights):
    """(problem, default xi, default x0) for a selector."""
    if name == "hovercraft":
        prob = hv.build_ocp(hv.HovercraftParams(), weights, args.n, args.dt, args.mode)
        xi = np.array(_floats(args.x_init, 6, "--x-init"))
        return prob, xi, hv.initial_guess(hv.OcpLayout(args.n, args.mode == hv.SLACK), xi)
    if name == "linear":
        return linear_test_problem(), np.array([0.5, 0.2]), np.zeros(4)
    if name == "planted_bug":
        return planted_bug_problem(), np.zeros(0), np.ones(1)
    if name.endswith(".json"):
        prob = load_problem(name)
        x0 = np.clip(np.zeros(prob.n), prob.omega.lower, prob.omega.upper)
        return prob, np.zeros(prob.p), x0
    raise UsageError(f"problem: unknown selector {name!r} (use hovercraft, linear, planted_bug or a .json file)")


# -- commands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    weights, x_init = _validate_ocp(args)
    if not args.horizon > 0:
        raise UsageError(f"--horizon: must be positive, got {args.horizon}")
    if args.warmup < 0:
        raise UsageError(f"--warmup: must be >= 0, got {args.warmup}")
    out = _outdir(args.out)
    t0 = time.perf_counter()
    trace = hv.simulate_closed_loop(
        hv.HovercraftParams(), weights, args.n, args.dt, x_init, args.horizon, args.stop_radius,
        mode=args.mode, plant=args.plant, warmup=ApproximateScp(args.warmup) if args.warmup else None,
        solver=_solver_config(args), run_to_horizon=args.run_to_horizon,
    )
    wall = time.perf_counter() - t0
    recs = [r for r in trace.step_records if r is not None]
    trace.write_csv(os.path.join(out, "sim_trace.csv"), timing=args.timing)
    write_records_csv(recs, os.path.join(out, "rtscp_records.csv"), timing=args.timing)
    write_records_jsonl(recs, os.path.join(out, "rtscp_records.jsonl"), timing=args.timing)
    times = [r.solve_time for r in recs]
    trace.write_summary(os.path.join(out, "sim_summary.json"), extra={
        "created": _stamp(), "seed": args.seed, "wall_time_s": wall,
        "solve_time_mean_s": float(np.mean(times)) if times else None,
        "solve_time_max_s": float(np.max(times)) if times else None,
    })
    if trace.aborted:
        print(f"simulation aborted after repeated solver failures at t={trace.times[-1]:.2f}s", file=sys.stderr)
        return EXIT_NUMERIC
    if trace.stop_time is None:
        print(f"stop condition not reached within {args.horizon}s", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"stop_time={trace.stop_time:.2f}s samples={len(trace.controls)} wall={wall:.1f}s")
    return EXIT_OK


def cmd_scp_study(args) -> int:
    weights, _ = _validate_ocp(args)
    prob, xi, x0 = _named_problem(args.problem, args, weights)
    if args.xi is not None:
        xi = np.array(_floats(args.xi, prob.p, "--xi"))
    out = _outdir(args.out)
    cfg = ScpConfig(stop_tolerance=args.tol or 1e-8,
                    max_outer_iterations=args.max_iters or 50,
                    subproblem=_solver_config(args, use_tol=False, use_iters=False))
    rep = solve_scp(prob, xi, x0, cfg)
    rows, ratios, ref_note = None, [], None
    if rep.iterates:
        try:
            z_star = diagnostics.reference_kkt(prob, xi, rep.iterates[-1].x)
            ratios = convergence_ratios(rep, z_star)
            # per-row column: ratio leaving iterate j, blank where the distance is below cutoff
            d = [z.distance(z_star) for z in rep.iterates]
            rows = [d[j + 1] / d[j] if d[j] > 1e-12 else None for j in range(len(d) - 1)]
        except ScpError as exc:
            ref_note = str(exc)
    rep.to_csv(os.path.join(out, "scp_report.csv"), ratios=rows)
    data = rep.to_dict()
    data.update({"problem": args.problem, "xi": xi.tolist(), "seed": args.seed, "created": _stamp(),
                 "ratios": ratios, "reference_error": ref_note})
    _dump(os.path.join(out, "scp_report.json"), data)
    print(f"status={rep.status} iterations={rep.iterations}"
          + (f" residual={rep.kkt_residuals[-1]:.3e}" if rep.kkt_residuals else ""))
    return EXIT_OK if rep.status == CONVERGED else EXIT_NUMERIC


def read_replay(path):
    """Measured states (rows that carry a control) from a simulation CSV."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise UsageError(f"--replay: cannot read {path}: {exc}")
    cols = hv.SIM_COLUMNS[1:7]
    if rows and not set(cols) <= set(rows[0]):
        raise UsageError(f"--replay: {path} lacks state columns {cols}")
    return [np.array([float(r[c]) for c in cols]) for r in rows if r.get("u1", "") != ""]


def cmd_contraction(args) -> int:
    weights, x_init = _validate_ocp(args)
    if args.jobs < 1:
        raise UsageError(f"--jobs: must be >= 1, got {args.jobs}")
    if args.replay:
        seq = read_replay(args.replay)
        source = {"replay": args.replay}
    else:
        if args.samples < 2:
            raise UsageError(f"--samples: contraction needs at least 2 samples, got {args.samples}")
        end = np.zeros(6) if args.xi_end is None else np.array(_floats(args.xi_end, 6, "--xi-end"))
        seq = [x_init + (end - x_init) * (k / (args.samples - 1)) for k in range(args.samples)]
        source = {"synthetic": {"start": x_init.tolist(), "end": end.tolist(), "samples": args.samples}}
    if len(seq) < 2:
        raise UsageError(f"contraction needs at least 2 parameter samples, got {len(seq)}")
    out = _outdir(args.out)
    prob = hv.build_ocp(hv.HovercraftParams(), weights, args.n, args.dt, args.mode)
    x0 = hv.initial_guess(hv.OcpLayout(args.n, args.mode == hv.SLACK), seq[0])
    rep = diagnostics.contraction_trace(
        prob, seq, x0, warmup=ApproximateScp(args.warmup) if args.warmup else None,
        config=_solver_config(args), jobs=args.jobs, oracle_tol=args.oracle_tol,
    )
    diagnostics.write_records_csv(rep, os.path.join(out, "contraction_records.csv"))
    diagnostics.write_fit_json(rep, os.path.join(out, "contraction_fit.json"), extra={
        "source": source, "samples": len(seq), "seed": args.seed, "created": _stamp(),
    })
    if not rep.complete:
        print(f"aborted at k={rep.aborted_at}: {rep.error}", file=sys.stderr)
        return EXIT_NUMERIC
    f = rep.fit
    print(f"omega_hat={f.omega_hat:.4f} c_hat={f.c_hat:.4f} violations={f.violations}/{f.record_count}")
    return EXIT_OK


def _random_points(prob, count, rng):
    lo = np.where(np.isfinite(prob.omega.lower), prob.omega.lower, -1.0)
    hi = np.where(np.isfinite(prob.omega.upper), prob.omega.upper, 1.0)
    return [rng.uniform(lo, hi) for _ in range(count)]


def cmd_check(args) -> int:
    weights, _ = _validate_ocp(args)
    if not args.problems:
        raise UsageError("--problems: empty problem list")
    if args.points < 1:
        raise UsageError(f"--points: must be >= 1, got {args.points}")
    tol = args.tol or 1e-5
    out = _outdir(args.out)
    rng = np.random.default_rng(args.seed)
    results, failures = [], []
    for name in args.problems:
        prob, xi, x0 = _named_problem(name, args, weights)
        pts = [x0] + _random_points(prob, args.points, rng)
        worst = max(((check_jacobian(prob, x), i) for i, x in enumerate(pts)), key=lambda t: t[0])
        entry = {"problem": name, "jacobian_error": worst[0], "jacobian_ok": worst[0] <= tol}
        if not entry["jacobian_ok"]:
            row, col, err = jacobian_error_location(prob.g, pts[worst[1]])
            entry["location"] = {"row": row, "col": col, "error": err, "x": pts[worst[1]].tolist()}
            failures.append(f"{name}: Jacobian entry ({row}, {col}) relative error {err:.3g}")
        try:
            entry["slater"] = bool(slater_check(build_subproblem(prob, x0, xi)))
        except ScpError as exc:
            entry["slater"], entry["slater_error"] = False, str(exc)
        if not entry["slater"]:
            failures.append(f"{name}: Slater check failed at the default linearization point")
        results.append(entry)
    _dump(os.path.join(out, "check_report.json"),
          {"results": results, "failures": failures, "tolerance": tol, "seed": args.seed, "created": _stamp()})
    for e in results:
        print(f"{e['problem']}: jacobian_error={e['jacobian_error']:.3e} slater={e['slater']}")
    if failures:
        for f in failures:
            print("FAIL " + f, file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "scp-study": cmd_scp_study,
            "contraction": cmd_contraction, "check": cmd_check}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"scpkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScpError as exc:
        print(f"scpkit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
