"""Command-line front door.

Subcommands configure one experiment each, run it, write a JSON report to
``--out`` (or stdout) and a one-line human summary to stderr. Exit status is
0 when every certified check passes, 2 when a bound or validation check is
violated, and 1 for usage or configuration errors. All randomness flows
from ``--seed``; re-running with the same arguments gives byte-identical
output regardless of ``STEIN_LAB_THREADS``.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import coloring, degrees, nonlinear, validation
from .errors import SteinLabError, TooLarge
from .report import stable_json
from .stein import SteinSolution, grid_points
from .testfuncs import SmoothTestFunction, parse_test_function

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VIOLATION = 2


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; we reserve 2 for
    bound violations, so remap usage errors to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _emit(text: str, out_path: str | None):
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _int_list(raw: str) -> list[int]:
    return [int(x) for x in raw.split(",") if x]


def _float_list(raw: str) -> list[float]:
    return [float(x) for x in raw.split(",") if x]


def _add_common(sub, samples_default=100_000, chunk_default=4096):
    sub.add_argument("--samples", type=int, default=samples_default)
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--chunk-size", type=int, default=chunk_default)
    sub.add_argument("--out", default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="steinlab",
                     description="Normal-approximation bounds from size-bias "
                                 "couplings, with Monte Carlo certification.")
    subs = parser.add_subparsers(dest="command", required=True)

    deg = subs.add_parser("degree-count",
                          help="degree counts in a G(n, pi) random graph")
    deg.add_argument("--n", type=int, required=True)
    group = deg.add_mutually_exclusive_group(required=True)
    group.add_argument("--c", type=float, help="pi = c / (n - 1)")
    group.add_argument("--pi", type=float)
    deg.add_argument("--degrees", type=_int_list, required=True)
    deg.add_argument("--h", default=None, help="e.g. cosine:a=0.5,0.5")
    deg.add_argument("--oracle", action="store_true",
                     help="compare closed-form moments against enumeration")
    _add_common(deg, chunk_default=512)

    col = subs.add_parser("color-match",
                          help="monochromatic edge counts under vertex coloring")
    col.add_argument("--graph", required=True,
                     help="cycle:64 | complete:8 | matching:10 | regular:n=200,d=3")
    col.add_argument("--colors", type=_float_list, required=True)
    col.add_argument("--h", default=None)
    col.add_argument("--oracle", action="store_true")
    _add_common(col, chunk_default=2048)

    non = subs.add_parser("nonlinear",
                          help="sums of nonnegative functions of Gaussian or "
                               "multinomial arguments")
    non.add_argument("--model", required=True,
                     help="gauss:rho=0.1,n=200 | multinomial:n=100,k=2")
    non.add_argument("--psi", required=True,
                     choices=["square", "exp", "indicator"])
    non.add_argument("--raw-psi", action="store_true",
                     help="skip scaling psi to unit Gaussian mean")
    non.add_argument("--inner", type=int, default=32,
                     help="inner draws for the multinomial conditional mean")
    non.add_argument("--h", default=None)
    _add_common(non, chunk_default=8192)

    stn = subs.add_parser("stein-check",
                          help="verify the smoothing-equation solution "
                               "residual and derivative caps")
    stn.add_argument("--h", required=True)
    stn.add_argument("--p", type=int, default=None)
    stn.add_argument("--extent", type=float, default=2.0)
    stn.add_argument("--grid-points", type=int, default=21)
    stn.add_argument("--fd-step", type=float, default=1e-3)
    stn.add_argument("--gh-nodes", type=int, default=40)
    stn.add_argument("--tol", type=float, default=1e-3)
    stn.add_argument("--out", default=None)

    val = subs.add_parser("validate-couplings",
                          help="re-check the coupling identity for every "
                               "shipped sampler")
    val.add_argument("--which", default="all",
                     help="comma list of registry names, or 'all'")
    val.add_argument("--threshold", type=float, default=4.0)
    _add_common(val, samples_default=1_000_000, chunk_default=16384)

    swp = subs.add_parser("sweep",
                          help="run one experiment across sizes; CSV output")
    swp.add_argument("experiment", choices=["degree-count", "color-match"])
    swp.add_argument("--n", type=_int_list, required=True)
    swp.add_argument("--c", type=float, default=None)
    swp.add_argument("--pi", type=float, default=None)
    swp.add_argument("--degrees", type=_int_list, default=None)
    swp.add_argument("--graph-family", default="cycle",
                     help="cycle | regular:d=3 (color-match only)")
    swp.add_argument("--colors", type=_float_list, default=None)
    swp.add_argument("--h", default=None)
    _add_common(swp, samples_default=20_000, chunk_default=512)
    return parser


def _default_h(p: int) -> SmoothTestFunction:
    return SmoothTestFunction("cosine", p=p, a=tuple([0.5] * p))


def _resolve_h(raw: str | None, p: int) -> SmoothTestFunction:
    h = parse_test_function(raw) if raw else _default_h(p)
    if h.p != p:
        raise _UsageError(f"test function has dimension {h.p}, expected {p}")
    return h


# ---------------------------------------------------------------------------
# Subcommand drivers
# ---------------------------------------------------------------------------

def _run_degree(args) -> int:
    if args.pi is not None:
        cfg = degrees.ErdosRenyiConfig(args.n, args.pi, tuple(args.degrees),
                                       check_pd=not args.oracle)
    else:
        cfg = degrees.ErdosRenyiConfig.from_c(args.n, args.c,
                                              tuple(args.degrees),
                                              check_pd=not args.oracle)
    if args.oracle:
        lam, sigma, _ = degrees.theoretical_moments(cfg)
        exact_lam, exact_sigma = degrees.brute_force_moments(cfg)
        scale = max(np.abs(exact_lam).max(), np.abs(exact_sigma).max(), 1.0)
        worst = max(np.abs(lam - exact_lam).max(),
                    np.abs(sigma - exact_sigma).max()) / scale
        match = bool(worst <= 1e-12)
        payload = {
            "experiment": "degree-count-oracle",
            "config": {"n": cfg.n, "pi": cfg.pi, "degrees": list(cfg.degrees)},
            "lambda_formula": lam, "lambda_exact": exact_lam,
            "sigma_formula": sigma, "sigma_exact": exact_sigma,
            "max_rel_diff": worst, "match": match,
        }
        _emit(stable_json(payload), args.out)
        print(f"degree-count oracle: max relative difference {worst:.3g} "
              f"[{'MATCH' if match else 'MISMATCH'}]", file=sys.stderr)
        return EXIT_OK if match else EXIT_VIOLATION
    h = _resolve_h(args.h, cfg.p)
    report = degrees.run_degree_experiment(cfg, h, args.samples,
                                           seed=args.seed,
                                           chunk_size=args.chunk_size)
    _emit(report.to_json(), args.out)
    print(report.summary(), file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VIOLATION


def _run_color(args) -> int:
    graph = coloring.parse_graph_spec(args.graph, seed=args.seed)
    cfg = coloring.ColoringConfig(tuple(args.colors))
    if args.oracle:
        lam, sigma = coloring.theoretical_moments(graph, cfg)
        exact = coloring.brute_force_moments(graph, cfg)
        scale = max(np.abs(exact[0]).max(), np.abs(exact[1]).max(), 1.0)
        worst = max(np.abs(lam - exact[0]).max(),
                    np.abs(sigma - exact[1]).max()) / scale
        match = bool(worst <= 1e-12)
        payload = {
            "experiment": "color-match-oracle",
            "config": {"graph": args.graph, "colors": list(cfg.probs)},
            "lambda_formula": lam, "lambda_exact": exact[0],
            "sigma_formula": sigma, "sigma_exact": exact[1],
            "max_rel_diff": worst, "match": match,
        }
        _emit(stable_json(payload), args.out)
        print(f"color-match oracle: max relative difference {worst:.3g} "
              f"[{'MATCH' if match else 'MISMATCH'}]", file=sys.stderr)
        return EXIT_OK if match else EXIT_VIOLATION
    h = _resolve_h(args.h, cfg.p)
    report = coloring.run_color_experiment(graph, cfg, h, args.samples,
                                           seed=args.seed,
                                           chunk_size=args.chunk_size,
                                           graph_name=args.graph)
    _emit(report.to_json(), args.out)
    print(report.summary(), file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VIOLATION


def _parse_model(raw: str, psi: nonlinear.PsiFunction):
    kind, _, rest = raw.partition(":")
    kv = dict(part.split("=") for part in rest.split(",") if part)
    if kind == "gauss":
        return nonlinear.GaussianSumConfig(int(kv["n"]), psi,
                                           rho=float(kv.get("rho", "0")))
    if kind == "multinomial":
        return nonlinear.MultinomialSumConfig(int(kv["n"]), int(kv["k"]), psi)
    raise _UsageError(f"unknown model {raw!r}")


def _run_nonlinear(args) -> int:
    psi = nonlinear.parse_psi(args.psi, normalize=not args.raw_psi)
    model = _parse_model(args.model, psi)
    h = _resolve_h(args.h, 1)
    report = nonlinear.run_nonlinear_experiment(
        model, h, args.samples, seed=args.seed,
        chunk_size=args.chunk_size, inner=args.inner,
    )
    _emit(report.to_json(), args.out)
    print(report.summary(), file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VIOLATION


def _run_stein(args) -> int:
    h = parse_test_function(args.h)
    if args.p is not None and args.p != h.p:
        raise _UsageError(f"--p {args.p} disagrees with the test function "
                          f"dimension {h.p}")
    sol = SteinSolution(h, gh_nodes=args.gh_nodes)
    grid = grid_points(h.p, args.extent, args.grid_points)
    residual = float(np.max(sol.pde_residual(grid, fd_step=args.fd_step)))
    norms = h.derivative_norms()
    violations = {}
    for k in (1, 2, 3):
        violations[f"order_{k}"] = sol.derivative_violation(
            grid, k, norm_k=norms.order(k)
        )
    ok = residual <= args.tol and all(v <= args.tol
                                      for v in violations.values())
    payload = {
        "experiment": "stein-check",
        "config": {"h": h.spec_string(), "p": h.p, "extent": args.extent,
                   "grid_points": args.grid_points, "fd_step": args.fd_step,
                   "gh_nodes": args.gh_nodes, "tol": args.tol},
        "max_pde_residual": residual,
        "derivative_violations": violations,
        "norms": {"h": norms.h, "d1": norms.d1, "d2": norms.d2,
                  "d3": norms.d3},
        "phi_h": sol.phi,
        "pass": bool(ok),
    }
    _emit(stable_json(payload), args.out)
    print(f"stein-check: residual={residual:.3g} "
          f"worst-violation={max(violations.values()):.3g} "
          f"[{'PASS' if ok else 'FAIL'}]", file=sys.stderr)
    return EXIT_OK if ok else EXIT_VIOLATION


def _run_validate(args) -> int:
    names = None if args.which == "all" else [s.strip()
                                              for s in args.which.split(",")]
    try:
        results = validation.validate_couplers(names, samples=args.samples,
                                               seed=args.seed,
                                               threshold=args.threshold)
    except KeyError as exc:
        raise _UsageError(str(exc))
    ok = all(entry["pass"] for entry in results.values())
    payload = {"experiment": "validate-couplings",
               "threshold": args.threshold, "results": results,
               "pass": bool(ok)}
    _emit(stable_json(payload), args.out)
    for name in sorted(results):
        entry = results[name]
        print(f"  {name}: max|z| = {entry['max_abs_z']:.2f} "
              f"[{'ok' if entry['pass'] else 'FAIL'}]", file=sys.stderr)
    return EXIT_OK if ok else EXIT_VIOLATION


def _run_sweep(args) -> int:
    rows = []
    all_passed = True
    for n in args.n:
        if args.experiment == "degree-count":
            if args.degrees is None:
                raise _UsageError("sweep degree-count needs --degrees")
            if args.c is None and args.pi is None:
                raise _UsageError("sweep degree-count needs --c or --pi")
            cfg = (degrees.ErdosRenyiConfig(n, args.pi, tuple(args.degrees))
                   if args.pi is not None else
                   degrees.ErdosRenyiConfig.from_c(n, args.c,
                                                   tuple(args.degrees)))
            h = _resolve_h(args.h, cfg.p)
            report = degrees.run_degree_experiment(
                cfg, h, args.samples, seed=args.seed,
                chunk_size=args.chunk_size)
        else:
            if args.colors is None:
                raise _UsageError("sweep color-match needs --colors")
            family = args.graph_family
            if family == "cycle":
                graph = coloring.cycle_graph(n)
                name = f"cycle:{n}"
            elif family.startswith("regular"):
                kv = dict(part.split("=")
                          for part in family.partition(":")[2].split(",")
                          if part)
                graph = coloring.random_regular_graph(n, int(kv["d"]),
                                                      seed=args.seed)
                name = f"regular:n={n},d={kv['d']}"
            else:
                raise _UsageError(f"unknown graph family {family!r}")
            cfg = coloring.ColoringConfig(tuple(args.colors))
            h = _resolve_h(args.h, cfg.p)
            report = coloring.run_color_experiment(
                graph, cfg, h, args.samples, seed=args.seed,
                chunk_size=args.chunk_size, graph_name=name)
        all_passed = all_passed and report.passed
        rows.append((n, report.bound.total, report.gap, report.gap_stderr))
        print(report.summary(), file=sys.stderr)
    lines = ["n,bound,gap,gap_stderr"]
    lines += [f"{n},{bound!r},{gap!r},{sem!r}" for n, bound, gap, sem in rows]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK if all_passed else EXIT_VIOLATION


def main(argv=None) -> int:
    parser = build_parser()
    started = time.monotonic()
    try:
        args = parser.parse_args(argv)
        runner = {
            "degree-count": _run_degree,
            "color-match": _run_color,
            "nonlinear": _run_nonlinear,
            "stein-check": _run_stein,
            "validate-couplings": _run_validate,
            "sweep": _run_sweep,
        }[args.command]
        code = runner(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TooLarge as exc:
        print(f"error: instance too large for exact enumeration: {exc}",
              file=sys.stderr)
        return EXIT_USAGE
    except (SteinLabError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(f"wall time: {time.monotonic() - started:.2f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
