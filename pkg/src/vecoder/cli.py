"""Command-line entry point: ``vecoder <command> [flags]``.

Commands: solve, sweep, simulate, table1, verify, threshold. Results go to
standard output as JSON (CSV for sweeps). Output on stdout is a function of
the flags alone; files written with ``--out`` / ``--energies-csv`` get a
``<path>.manifest.json`` sidecar that also records the wall-clock time.

Exit codes: 0 success, 1 error, 2 the requested fixed point diverged.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__, rmt
from .alphabet import Alphabet, Kind, lattice_points
from .errors import BudgetExceeded, VecoderError
from .montecarlo import (ChannelConfig, Solver, gramian_inverse, precode_exact, precode_sphere,
                         replica_reference, run_experiment, sample_channel, sample_stream)
from .replica import (FixedPointConfig, ReplicaSolution, SolverKind, find_threshold,
                      semidiscrete_vs_quadrature_crossover, solve, solve_1d, solve_general,
                      solve_quadrature, solve_square_1d, sweep)
from .rmt import RTransformSpec

EXIT_OK, EXIT_ERROR, EXIT_DIVERGED = 0, 1, 2

CSV_COLUMNS = ("alpha", "q", "b", "p", "es", "eb", "es_db", "converged", "diverged", "iterations")

# published energy per symbol of the inverted square channel; L=inf uses L=64
TABLE1 = {1: (math.inf, math.inf), 2: (2.6942, 4.3043), 3: (2.6656, 4.2579),
          4: (2.6655, 4.2578), 64: (2.6655, 4.2578)}
TABLE1_TOL = 1e-3


# ---------------------------------------------------------------------------
# helpers


def _finite(x):
    """JSON-safe scalar: non-finite floats become null."""
    if isinstance(x, (float, np.floating)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return _finite(obj)


def _dump(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=False, allow_nan=False)


def _manifest(args: argparse.Namespace, outputs: list[str]) -> dict:
    flags = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    blob = json.dumps(flags, sort_keys=True, default=str).encode()
    return {
        "command": args.command,
        "flags": flags,
        "version": __version__,
        "seed": flags.get("seed"),
        "config_hash": hashlib.sha256(blob).hexdigest()[:16],
        "outputs": outputs,
    }


def _write_sidecar(path: str, manifest: dict) -> None:
    side = dict(manifest, timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"))
    with open(path + ".manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dump(side) + "\n")


def _points(args) -> np.ndarray:
    if args.points:
        try:
            pts = np.array([float(v) for v in args.points.split(",")])
        except ValueError:
            raise VecoderError(f"--points must be a comma-separated list of numbers: {args.points!r}")
        if len(pts) != args.L:
            raise VecoderError(f"--points lists {len(pts)} values but --L is {args.L}")
        return pts
    return lattice_points(args.L)


def _fp_config(args) -> FixedPointConfig:
    return FixedPointConfig(damping=args.damping, tol=args.tol, max_iter=args.max_iter,
                            quad_order=args.quad_order)


def _replica(args, alpha: float, init: ReplicaSolution | None = None) -> ReplicaSolution:
    pts = _points(args)
    cfg = _fp_config(args)
    if args.family == "inverse-gramian":
        return solve(args.lattice, alpha, pts, cfg, init)
    a = Alphabet.build(args.lattice, args.L, pts)
    return solve_general(RTransformSpec.marchenko_pastur(alpha), a, cfg=cfg, init=init)


def _csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args) -> int:
    sol = _replica(args, args.alpha)
    print(_dump(sol.to_dict() | {"manifest": _manifest(args, [])}))
    return EXIT_OK if sol.converged else EXIT_DIVERGED


def cmd_sweep(args) -> int:
    if args.steps < 1:
        raise VecoderError("--steps must be at least 1")
    grid = np.linspace(args.alpha_min, args.alpha_max, args.steps)
    if args.family == "inverse-gramian":
        rows = sweep(args.lattice, grid, _points(args), _fp_config(args),
                     parallel=args.parallel, workers=_workers())
    else:
        rows, last = [], None
        for a in grid:
            sol = _replica(args, float(a), last)
            last = sol if sol.converged else last
            rows.append((float(a), sol))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for a, sol in rows:
        d = sol.to_dict()
        d["alpha"] = a
        w.writerow([_csv_cell(d[c]) for c in CSV_COLUMNS])
    text = buf.getvalue()
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        _write_sidecar(args.out, _manifest(args, [args.out]))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _workers() -> int | None:
    env = os.environ.get("VECODER_THREADS")
    return int(env) if env else None


def cmd_simulate(args) -> int:
    cfg = ChannelConfig(args.k, args.n, args.samples, args.seed, args.solver)
    a = Alphabet.build(args.lattice, args.L, _points(args))
    ref = replica_reference(a, cfg.alpha)
    try:
        res = run_experiment(cfg, a, ref, threads=args.threads)
    except BudgetExceeded as exc:
        print(f"error: {exc}. Try a smaller --k or --L, or --solver sphere.", file=sys.stderr)
        return EXIT_ERROR
    outputs = []
    if args.energies_csv:
        res.write_energies_csv(args.energies_csv)
        outputs.append(args.energies_csv)
    manifest = _manifest(args, outputs)
    if args.energies_csv:
        _write_sidecar(args.energies_csv, manifest)
    out = res.to_dict()
    if not args.include_energies:
        out.pop("energies")
    print(_dump(out | {"replica": ref.to_dict(), "manifest": manifest}))
    return EXIT_OK


def table1_rows() -> list[dict]:
    rows = []
    for L, (es_ref, db_ref) in TABLE1.items():
        sol = solve_square_1d(lattice_points(L))
        es = sol.es if sol.converged else math.inf
        db = sol.es_db if sol.converged else math.inf
        if math.isinf(es_ref):
            ok = math.isinf(es)
        else:
            ok = abs(es - es_ref) <= TABLE1_TOL and abs(db - db_ref) <= TABLE1_TOL
        rows.append({"L": "inf" if L == 64 else L, "L_used": L, "es": es, "es_db": db,
                     "ref_es": es_ref, "ref_es_db": db_ref, "ok": ok})
    return rows


def cmd_table1(args) -> int:
    rows = table1_rows()
    print(f"{'L':>4} {'E_s':>10} {'E_s [dB]':>10} {'ref':>8}  status")
    for r in rows:
        es = "inf" if math.isinf(r["es"]) else f"{r['es']:.4f}"
        db = "inf" if math.isinf(r["es_db"]) else f"{r['es_db']:.4f}"
        ref = "inf" if math.isinf(r["ref_es"]) else f"{r['ref_es']:.4f}"
        print(f"{r['L']!s:>4} {es:>10} {db:>10} {ref:>8}  {'ok' if r['ok'] else 'MISMATCH'}")
    print(_dump({"rows": rows, "manifest": _manifest(args, [])}))
    return EXIT_OK if all(r["ok"] for r in rows) else EXIT_ERROR


# -- verification suite -------------------------------------------------------


def _check_lemma() -> tuple[bool, str]:
    worst = 0.0
    for alpha in np.linspace(0.2, 0.8, 6):
        for w in np.linspace(-2.0, -0.05, 10):
            mp = RTransformSpec.marchenko_pastur(alpha)
            ig = RTransformSpec.inverse_gramian(alpha)
            worst = max(worst, rmt.verify_inverse_lemma(mp, ig, w))
    return worst < 1e-10, f"max residual {worst:.2e} on 60 points"


def _check_specialization() -> tuple[bool, str]:
    worst = 0.0
    for L in (2, 3):
        a = Alphabet.one_dim(L)
        for alpha in (0.25, 0.5, 1.0):
            ref = solve_1d(alpha, lattice_points(L)).es
            gen = solve_general(RTransformSpec.inverse_gramian(alpha), a).es
            worst = max(worst, abs(gen - ref) / ref)
    return worst < 1e-4, f"max relative es gap {worst:.2e}"


def _check_scaling() -> tuple[bool, str]:
    gamma = 1.7
    worst = 0.0
    for alpha in (0.5, 1.2):
        base = solve_1d(alpha, lattice_points(3)).es
        scaled = solve_1d(alpha, gamma * lattice_points(3)).es
        worst = max(worst, abs(scaled / base - gamma ** 2))
    return worst < 1e-8, f"max |E(g c)/E(c) - g^2| = {worst:.2e}"


def _check_sphere() -> tuple[bool, str]:
    worst = 0.0
    for i in range(40):
        rng = sample_stream(2024, i)
        k, L = 2 + i % 7, 1 + i % 3
        a = Alphabet.one_dim(L)
        J = gramian_inverse(sample_channel(k, 2 * k, rng))
        s = list(rng.integers(0, 2, k))
        worst = max(worst, abs(precode_exact(J, s, a)[1] - precode_sphere(J, s, a)[1]))
    return worst < 1e-10, f"max energy gap {worst:.2e} on 40 instances"


def _check_checkerboard() -> tuple[bool, str]:
    worst = 0.0
    pts = lattice_points(8)
    for alpha in (0.5, 1.5):
        quad = solve_quadrature(alpha, pts).eb
        cb = solve(SolverKind.CHECKERBOARD, alpha, pts).eb
        worst = max(worst, abs(cb - quad) / quad)
    return worst < 0.01, f"max relative E_b gap {worst:.2e}"


def _check_crossover() -> tuple[bool, str]:
    a = semidiscrete_vs_quadrature_crossover()
    return abs(a - 0.479) <= 0.01, f"crossover load {a:.4f}"


CHECKS = {
    "inverse-lemma": _check_lemma,
    "specialization": _check_specialization,
    "scaling-law": _check_scaling,
    "sphere-vs-brute": _check_sphere,
    "checkerboard-quadrature": _check_checkerboard,
    "semidiscrete-crossover": _check_crossover,
}


def run_checks(names=None) -> list[tuple[str, bool, str]]:
    out = []
    for name in names or CHECKS:
        try:
            ok, detail = CHECKS[name]()
        except Exception as exc:  # noqa: BLE001 - a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out


def cmd_verify(args) -> int:
    saved = rmt.BRANCH_SIGN
    if args.fault == "branch-sign":
        rmt.BRANCH_SIGN = +1
    try:
        results = run_checks(args.check)
    finally:
        rmt.BRANCH_SIGN = saved
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_ERROR


def cmd_threshold(args) -> int:
    if args.family != "inverse-gramian":
        raise VecoderError("threshold search is implemented for the inverse-Gramian channel only")
    thr = find_threshold(args.lattice, _points(args), _fp_config(args),
                         lo=args.lo, hi=args.hi, atol=args.atol)
    print(_dump({"lattice": args.lattice, "L": args.L, "threshold": thr,
                 "manifest": _manifest(args, [])}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_lattice(p, default_lattice="1d"):
    p.add_argument("--lattice", choices=[k.value for k in Kind], default=default_lattice)
    p.add_argument("--L", type=int, required=True, help="points per symbol and dimension")
    p.add_argument("--points", help="comma-separated base set B_0 (default +1,-3,+5,...)")


def _add_solver(p):
    p.add_argument("--family", choices=["inverse-gramian", "mp"], default="inverse-gramian")
    _add_lattice(p)
    d = FixedPointConfig()
    p.add_argument("--tol", type=float, default=d.tol)
    p.add_argument("--max-iter", type=int, default=d.max_iter)
    p.add_argument("--damping", type=float, default=d.damping)
    p.add_argument("--quad-order", type=int, default=d.quad_order)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vecoder", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the replica fixed point at one load")
    _add_solver(p)
    p.add_argument("--alpha", type=float, required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="solve on a grid of loads, emit CSV")
    _add_solver(p)
    p.add_argument("--alpha-min", type=float, required=True)
    p.add_argument("--alpha-max", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", help="CSV path (default: standard output)")
    p.add_argument("--parallel", action="store_true", help="cold-start points on a thread pool")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="Monte-Carlo run of the exact precoder")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    _add_lattice(p)
    p.add_argument("--solver", choices=[s.value for s in Solver], default="auto")
    p.add_argument("--threads", type=int, help="worker threads (default VECODER_THREADS)")
    p.add_argument("--energies-csv", help="write per-sample energies to this CSV")
    p.add_argument("--include-energies", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("table1", help="energy per symbol of the inverted square channel")
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("verify", help="run the cross-module verification suite")
    p.add_argument("--check", action="append", choices=list(CHECKS),
                   help="run only this check (repeatable)")
    p.add_argument("--fault", choices=["branch-sign"], help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("threshold", help="load where the fixed point disappears")
    _add_solver(p)
    p.add_argument("--lo", type=float, default=0.5)
    p.add_argument("--hi", type=float, default=3.0)
    p.add_argument("--atol", type=float, default=1e-3)
    p.set_defaults(func=cmd_threshold)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (VecoderError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
