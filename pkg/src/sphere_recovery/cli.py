"""Command-line entry points for codes, sampling, moments, recovery,
analysis reports, transport, and experiment runs."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    candes_error_constant,
    concentration_bound,
    mse_bound,
    rip_constant,
    theorem_b_min_degree,
    theorem_b_probability,
    theorem_b_sample_bound,
)
from .experiments import load_config, run_experiment
from .kss import sample_kss, save_polynomial
from .l1 import solve_bp, solve_bpdn
from .measures import load_measure
from .moments import (
    build_ensemble,
    load_matrix_csv,
    load_vector_csv,
    moments_of,
    save_matrix_csv,
    save_vector_csv,
)
from .sphere_codes import load_code, make_circle_code, make_e8_code, save_code
from .transport import wasserstein

__all__ = ["main"]


def _write_json(payload, out):
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _cmd_codes_gen(args) -> int:
    if args.kind == "circle":
        code = make_circle_code(args.N, offset=args.offset)
    else:
        code = make_e8_code()
    save_code(args.out, code)
    return 0


def _cmd_kss_sample(args) -> int:
    polys = sample_kss(args.n, args.d, args.m, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, poly in enumerate(polys):
        save_polynomial(out / f"poly_{i:04d}.txt", poly)
    return 0


def _cmd_moments_build(args) -> int:
    code = load_code(args.code)
    mu = load_measure(args.measure)
    ensemble = build_ensemble(code, args.d, args.m, args.seed)
    b = moments_of(ensemble, mu)
    save_vector_csv(args.out, b.values)
    if args.save_phi:
        save_matrix_csv(args.save_phi, ensemble.phi)
    return 0


def _cmd_recover(args) -> int:
    M = load_matrix_csv(args.matrix)
    b = load_vector_csv(args.moments)
    if args.tau > 0.0:
        sol = solve_bpdn(M, b, args.tau)
    else:
        sol = solve_bp(M, b)
    _write_json(sol.to_dict(), args.out)
    return 0 if sol.status == "optimal" else 1


def _cmd_analyze_rip(args) -> int:
    M = load_matrix_csv(args.matrix)
    report = rip_constant(M, args.s)
    _write_json(
        {
            "s": report.s,
            "delta_s": report.delta_s,
            "worst_subset": list(report.worst_subset),
            "method": report.method,
            "subsets_checked": report.subsets_checked,
        },
        args.out,
    )
    return 0


def _cmd_analyze_bounds(args) -> int:
    reports = []
    if args.preset == "theorem-b":
        if args.N is None or args.k is None or args.delta is None:
            raise SystemExit("theorem-b needs --N, --k, --delta")
        value = theorem_b_sample_bound(args.N, args.k, args.delta)
        reports.append(
            {
                "name": "sample-count-bound",
                "inputs": {"N": args.N, "k": args.k, "delta": args.delta},
                "value": value,
            }
        )
        m = args.m if args.m is not None else int(math.ceil(value))
        reports.append(theorem_b_probability(args.N, args.k, m, args.delta).to_dict())
        if args.alpha is not None:
            reports.append(
                {
                    "name": "minimum-degree",
                    "inputs": {"k": args.k, "alpha": args.alpha, "delta": args.delta},
                    "value": theorem_b_min_degree(args.k, args.alpha, args.delta),
                }
            )
    elif args.preset == "concentration":
        if args.m is None or args.eta is None:
            raise SystemExit("concentration needs --m, --eta")
        reports.append(
            {
                "name": "concentration-tail",
                "inputs": {"m": args.m, "eta": args.eta},
                "value": concentration_bound(args.m, args.eta),
            }
        )
    elif args.preset == "candes":
        if args.delta is None:
            raise SystemExit("candes needs --delta")
        reports.append(
            {
                "name": "l1-stability-constant",
                "inputs": {"delta": args.delta},
                "value": candes_error_constant(args.delta),
                "note": "adopted formula 4*sqrt(1+delta)/(1-(1+sqrt(2))*delta)",
            }
        )
    else:  # mse
        if args.weights is None or args.theta is None or args.d is None:
            raise SystemExit("mse needs --weights, --theta, --d")
        g = np.array([float(x) for x in args.weights.split(",")])
        k = args.k if args.k is not None else g.size
        reports.append(
            {
                "name": "moment-gap-mse-bound",
                "inputs": {"k": k, "theta": args.theta, "d": args.d},
                "value": mse_bound(g, k, args.theta, args.d),
            }
        )
    _write_json(reports, args.out)
    return 0


def _cmd_transport(args) -> int:
    mu = load_measure(args.a)
    nu = load_measure(args.b)
    distance, plan = wasserstein(mu, nu)
    _write_json({"distance": distance, "cost": plan.cost}, args.out)
    if args.plan_out:
        save_matrix_csv(args.plan_out, plan.plan)
    return 0


def _cmd_experiment_run(args) -> int:
    config = load_config(args.config)
    result = run_experiment(config, args.out, figure=args.figure)
    sys.stdout.write(
        f"rows={result.summary['row_count']} optimal={result.summary['optimal_rows']} "
        f"ok={result.ok}\n"
    )
    return 0 if result.ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sphere-recovery",
        description="Recover discrete measures on the sphere from random moments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    codes = sub.add_parser("codes", help="spherical code generation").add_subparsers(
        dest="action", required=True
    )
    gen = codes.add_parser("gen", help="generate a code file")
    gen.add_argument("--kind", choices=("circle", "e8"), required=True)
    gen.add_argument("--N", type=int, default=200)
    gen.add_argument("--offset", type=float, default=0.0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(fn=_cmd_codes_gen)

    kss = sub.add_parser("kss", help="random polynomial sampling").add_subparsers(
        dest="action", required=True
    )
    sample = kss.add_parser("sample", help="sample polynomials to a directory")
    sample.add_argument("--n", type=int, required=True)
    sample.add_argument("--d", type=int, required=True)
    sample.add_argument("--m", type=int, required=True)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--out", required=True)
    sample.set_defaults(fn=_cmd_kss_sample)

    moments = sub.add_parser("moments", help="measurement ensembles").add_subparsers(
        dest="action", required=True
    )
    build = moments.add_parser("build", help="build moments of a measure")
    build.add_argument("--code", required=True)
    build.add_argument("--measure", required=True)
    build.add_argument("--d", type=int, required=True)
    build.add_argument("--m", type=int, required=True)
    build.add_argument("--seed", type=int, default=0)
    build.add_argument("--out", required=True)
    build.add_argument("--save-phi", default=None)
    build.set_defaults(fn=_cmd_moments_build)

    recover = sub.add_parser("recover", help="l1 recovery from moments")
    recover.add_argument("--matrix", required=True)
    recover.add_argument("--moments", required=True)
    recover.add_argument("--tau", type=float, default=0.0)
    recover.add_argument("--out", default=None)
    recover.set_defaults(fn=_cmd_recover)

    analyze = sub.add_parser("analyze", help="analytic reports").add_subparsers(
        dest="action", required=True
    )
    rip = analyze.add_parser("rip", help="restricted isometry constant")
    rip.add_argument("--matrix", required=True)
    rip.add_argument("--s", type=int, required=True)
    rip.add_argument("--out", default=None)
    rip.set_defaults(fn=_cmd_analyze_rip)
    bounds = analyze.add_parser("bounds", help="analytic bound reports")
    bounds.add_argument(
        "--preset", choices=("theorem-b", "concentration", "candes", "mse"), required=True
    )
    bounds.add_argument("--N", type=int, default=None)
    bounds.add_argument("--k", type=int, default=None)
    bounds.add_argument("--m", type=int, default=None)
    bounds.add_argument("--delta", type=float, default=None)
    bounds.add_argument("--eta", type=float, default=None)
    bounds.add_argument("--alpha", type=float, default=None)
    bounds.add_argument("--theta", type=float, default=None)
    bounds.add_argument("--d", type=int, default=None)
    bounds.add_argument("--weights", default=None)
    bounds.add_argument("--out", default=None)
    bounds.set_defaults(fn=_cmd_analyze_bounds)

    transport = sub.add_parser("transport", help="optimal transport").add_subparsers(
        dest="action", required=True
    )
    wass = transport.add_parser("wasserstein", help="distance between two measures")
    wass.add_argument("--a", required=True)
    wass.add_argument("--b", required=True)
    wass.add_argument("--plan-out", default=None)
    wass.add_argument("--out", default=None)
    wass.set_defaults(fn=_cmd_transport)

    experiment = sub.add_parser("experiment", help="experiment harness").add_subparsers(
        dest="action", required=True
    )
    run = experiment.add_parser("run", help="run a configured experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--figure", action="store_true")
    run.set_defaults(fn=_cmd_experiment_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, RuntimeError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
