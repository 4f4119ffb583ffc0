"""Command line runner: ``riemsmp <kind> [options]`` or ``riemsmp --config file``.

Exit codes: 0 pass, 1 property failure, 2 usage or configuration error,
3 inconclusive, 4 expected violation confirmed.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .barriers import certify_strict_supersolution
from .discrete import (Grid2D, SchemeSpec, ConvergenceError, SchemeError, solve_dirichlet,
                       write_field_csv)
from .experiments import (comparison_experiment, condition_matrix, hopf_experiment,
                          smp_experiment, smp_holds)
from .geometry import GeometryError, ManifoldModel, convexity_radius
from .operators import CATALOG_IDS, kernel_from_id
from .properties import (ALPHA_MAX, check_homogeneity, check_iuc, check_lpe, check_lsp, check_proper,
                         check_uniform_ellipticity, check_upe, check_usp)
from .reports import FAIL, INCONCLUSIVE, PASS, render_reports

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_INCONCLUSIVE, EXIT_VIOLATION = 0, 1, 2, 3, 4
KINDS = ("check", "barrier", "solve", "smp", "hopf", "compare", "matrix")
BOUNDARIES = ("saddle", "radial", "affine", "zero")


class UsageError(Exception):
    pass


def build_parser():
    p = argparse.ArgumentParser(prog="riemsmp", description="maximum principle experiments")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--config", help="experiment config (INI, [experiment] section)")
    sub = p.add_subparsers(dest="kind")
    for kind in KINDS:
        s = sub.add_parser(kind)
        s.add_argument("--kernel", default="laplace-beltrami")
        s.add_argument("--kappa", type=float, default=0.0)
        s.add_argument("--dim", type=int, default=2)
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--out", help="report path (CSV sidecar next to it)")
        s.add_argument("--spacing", type=float, default=None)
        s.add_argument("--size", type=int, default=41)
        s.add_argument("--alpha-max", type=float, default=ALPHA_MAX)
        s.add_argument("--r0", type=float, default=0.5)
        s.add_argument("--boundary", choices=BOUNDARIES, default="saddle")
    return p


def _config_argv(path):
    """Turn ``[experiment]`` keys into command line arguments."""
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"invalid config {path}: {exc}") from exc
    if not cp.has_section("experiment"):
        raise UsageError(f"invalid config {path}: missing [experiment] section")
    sec = cp["experiment"]
    kind = sec.get("kind")
    if kind not in KINDS:
        raise UsageError(f"invalid config {path}: [experiment] kind must be one of {', '.join(KINDS)}")
    argv = [kind]
    allowed = {"kernel", "kappa", "dim", "seed", "out", "spacing", "size", "alpha_max", "r0", "boundary"}
    for key, val in sec.items():
        if key == "kind":
            continue
        if key not in allowed:
            raise UsageError(f"invalid config {path}: [experiment] unknown field {key!r}")
        argv += ["--" + key.replace("_", "-"), val]
    return argv


def _manifold(args):
    if args.dim < 1:
        raise UsageError("--dim must be positive")
    if not math.isfinite(args.kappa):
        raise UsageError("--kappa must be finite")
    return ManifoldModel(args.dim, args.kappa)


def _kernel(kid):
    try:
        return kernel_from_id(kid)
    except (KeyError, ValueError) as exc:
        raise UsageError(f"unknown kernel {kid!r} (known: {', '.join(CATALOG_IDS)})") from exc


def _verdict_code(verdicts):
    if FAIL in verdicts:
        return EXIT_FAIL
    if INCONCLUSIVE in verdicts:
        return EXIT_INCONCLUSIVE
    return EXIT_PASS


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _report_rows(reports):
    return [[r.predicate, r.verdict, r.min_margin, r.alpha_threshold] for r in reports]


# ------------------------------------------------------------ experiment kinds

def run_check(args):
    m = _manifold(args)
    k = _kernel(args.kernel)
    reps = [check_proper(k, n=m.n, seed=args.seed),
            check_lpe(k, m, alpha_max=args.alpha_max, seed=args.seed),
            check_upe(k, m, alpha_max=args.alpha_max, seed=args.seed),
            check_lsp(k, m, alpha_max=args.alpha_max, seed=args.seed),
            check_usp(k, m, alpha_max=args.alpha_max, seed=args.seed)]
    if k.homogeneity is not None:
        reps.append(check_homogeneity(k, n=m.n, seed=args.seed))
    reps.append(check_uniform_ellipticity(k, n=m.n, seed=args.seed))
    reps.append(check_iuc(k, m, seed=args.seed))
    code = _verdict_code([r.verdict for r in reps])
    return reps, _csv_text(["predicate", "verdict", "min_margin", "threshold"], _report_rows(reps)), code


def run_barrier(args):
    m = _manifold(args)
    if not 0 < args.r0 < convexity_radius(m):
        raise UsageError(f"--r0 must lie in (0, {convexity_radius(m):g}) for kappa={m.kappa:g}")
    rep = certify_strict_supersolution(_kernel(args.kernel), m, m.origin(), args.r0,
                                       alpha_max=args.alpha_max, seed=args.seed)
    rows = [[eps, margin] for eps, margin in rep.details.get("eps_margins", {}).items()]
    return [rep], _csv_text(["eps", "margin"], rows), _verdict_code([rep.verdict])


def _grid(args):
    if args.dim != 2:
        raise UsageError("discrete experiments need --dim 2")
    if args.size < 7:
        raise UsageError("--size must be at least 7")
    spacing = args.spacing if args.spacing is not None else 2.0 / (args.size - 1)
    if not spacing > 0:
        raise UsageError("--spacing must be positive")
    try:
        return Grid2D(_manifold(args), spacing, args.size)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _boundary(grid, kind):
    x, y = grid.chart.T
    if kind == "saddle":
        return 0.5 * (x * x - 2 * y * y)
    if kind == "radial":
        return x * x + y * y
    if kind == "affine":
        return 1 + 2 * x - y
    return np.zeros(grid.count)


def run_solve(args):
    grid = _grid(args)
    scheme = SchemeSpec(_kernel(args.kernel))
    data = _boundary(grid, args.boundary)
    data[grid.interior] = 0.0
    try:
        sol, info = solve_dirichlet(scheme, grid, data)
        code = EXIT_PASS
    except SchemeError as exc:
        raise UsageError(str(exc)) from exc
    except ConvergenceError as exc:
        sol, info, code = exc.field, exc.info, EXIT_FAIL
    rec = (f"id=solve[{scheme.kernel_id}] converged={'true' if info['converged'] else 'false'} "
           f"sweeps={info['sweeps']} residual={info['residual']:.10g} size={grid.size} "
           f"spacing={grid.spacing:.10g} boundary={args.boundary}")
    buf = io.StringIO()
    write_field_csv(buf, grid, sol.values, sol.flagged)
    return [rec], buf.getvalue(), code


def run_smp(args):
    if args.dim != 2:
        raise UsageError("discrete experiments need --dim 2")
    kid = args.kernel
    if kid != "counterexample":
        _kernel(kid)
    solve = ("laplace-beltrami", "pucci+", "pucci-")
    rows, summary = smp_experiment(args.size, args.kappa, args.seed, kernels=(kid,),
                                   solve_kernels=solve if kid in solve else ())
    s = summary[kid]
    recs = [r.to_record() for r in rows]
    recs.append(" ".join(f"{k}={v}" for k, v in [("summary", kid)] + sorted(s.items())))
    if kid == "counterexample":
        code = EXIT_VIOLATION if s["nonconstant"] > 0 else EXIT_FAIL
    else:
        code = EXIT_PASS if smp_holds(summary, kid) else EXIT_FAIL
    table = _csv_text(["kernel", "candidate", "outcome", "mirror", "agree", "monotone", "reached", "active"],
                      [[r.kernel, r.candidate, r.direct, r.mirror, r.agree, r.monotone, r.reached, r.total]
                       for r in rows])
    return recs, table, code


def run_hopf(args):
    spacings = (args.spacing,) if args.spacing is not None else (1 / 20, 1 / 40)
    rows = hopf_experiment(spacings, args.seed)
    table = _csv_text(["spacing", "quotient", "bound", "required", "passed"],
                      [[r.spacing, r.quotient, r.bound, r.bound * (1 - 5 * r.spacing), r.passed] for r in rows])
    return [r.to_record() for r in rows], table, EXIT_PASS if all(r.passed for r in rows) else EXIT_FAIL


def run_compare(args):
    rows = comparison_experiment(args.size, seed=args.seed)
    want = {"touching": "identity", "constant-gap": "strict separation"}
    ok = all(r.verdict == want[r.pair] for r in rows)
    table = _csv_text(["pair", "verdict", "max_gap"], [[r.pair, r.verdict, r.max_gap] for r in rows])
    return [r.to_record() for r in rows], table, EXIT_PASS if ok else EXIT_FAIL


def run_matrix(args):
    rows, _ = condition_matrix(args.kappa, args.seed)
    mism = sum(not r.match for r in rows)
    recs = [r.to_record() for r in rows] + [f"summary=matrix rows={len(rows)} mismatches={mism}"]
    table = _csv_text(["kernel", "condition", "claimed", "verdict", "match"],
                      [[r.kernel, r.condition, r.claimed, r.verdict, r.match] for r in rows])
    return recs, table, EXIT_PASS if mism == 0 else EXIT_FAIL


RUNNERS = {"check": run_check, "barrier": run_barrier, "solve": run_solve, "smp": run_smp,
           "hopf": run_hopf, "compare": run_compare, "matrix": run_matrix}


def run(args, stdout=None):
    """Execute one experiment; returns the exit code."""
    stdout = stdout or sys.stdout
    recs, table, code = RUNNERS[args.kind](args)
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    text = render_reports(recs, header=f"riemsmp {__version__} {args.kind} {stamp}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        side = (args.out[:-4] if args.out.endswith(".txt") else args.out) + ".csv"
        with open(side, "w", encoding="utf-8", newline="") as fh:
            fh.write(table)
    else:
        stdout.write(text)
    return code


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
        if args.config:
            if args.kind:
                raise UsageError("give either a subcommand or --config, not both")
            args = parser.parse_args(_config_argv(args.config))
        if not args.kind:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return run(args)
    except SystemExit as exc:  # argparse errors
        return EXIT_USAGE if exc.code else EXIT_PASS
    except (UsageError, GeometryError) as exc:
        print(f"riemsmp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
