"""Command-line harness.

Subcommands: run | sweep | opt | adversary | certify | validate.
Exit codes: 0 success, 1 certificate failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import certificates as certs
from .adversaries import (
    NegativeAdversaryConfig,
    PositiveAdversaryConfig,
    random_instance,
    run_negative_adversary,
    run_positive_adversary,
)
from .allocators import make_allocator
from .benchmark import solve_opt
from .core import (
    Allocation,
    ConfigurationError,
    Instance,
    InvalidInputError,
    PMeanParam,
    PreconditionError,
    allocation_to_csv,
    load_allocation,
    load_instance,
    p_mean_welfare,
    save_allocation,
    save_instance,
    utilities_of,
    validate_instance,
)
from .harness import execute_run, instance_hash, regime_bound

EXIT_OK = 0
EXIT_CERT_FAIL = 1
EXIT_USAGE = 2


def worker_count() -> int:
    """Worker-pool cap from PMEAN_ARENA_THREADS (default: one worker)."""
    raw = os.environ.get("PMEAN_ARENA_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        return 1


def _write(text: str, out: str | None):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _report_text(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(rows, indent=2, default=float) + "\n"
    buf = io.StringIO()
    keys: list[str] = []
    for row in rows:
        for k in row:
            if k not in keys:
                keys.append(k)
    writer = csv.DictWriter(buf, fieldnames=keys)
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in keys})
    return buf.getvalue()


def _load_or_make_instance(args) -> Instance:
    if getattr(args, "instance", None):
        return load_instance(args.instance)
    if getattr(args, "n", None):
        m = getattr(args, "m", None) or 4 * args.n
        return random_instance(args.n, m, seed=args.seed, dist=args.dist)
    raise InvalidInputError("provide --instance PATH or --n N")


def cmd_run(args) -> int:
    inst = _load_or_make_instance(args)
    p = PMeanParam.parse(args.p)
    report, trace, result = execute_run(
        inst, args.algo, p,
        granularity=args.granularity,
        relaxed=args.relaxed,
        uniform_share=args.uniform_share,
    )
    payload = report.to_dict()
    _write(_report_text([payload], args.format) if args.format == "csv"
           else json.dumps(payload, indent=2, default=float) + "\n", args.out)
    if any(not c.passed for c in report.certificates):
        return EXIT_CERT_FAIL
    return EXIT_OK


def cmd_sweep(args) -> int:
    p_grid = [PMeanParam.parse(tok) for tok in args.p.split(",")]
    n_grid = [int(tok) for tok in args.n.split(",")]
    algos = args.algo.split(",")
    if not p_grid or not n_grid or not algos:
        raise InvalidInputError("sweep grids must be non-empty")
    rows = []
    failures = 0
    for n in n_grid:
        for idx in range(args.instances):
            inst = random_instance(n, args.m or 4 * n, seed=args.seed + idx,
                                   dist=args.dist)
            for p in p_grid:
                for algo in algos:
                    key = dict(n=n, instance=idx, p=str(p), algo=algo)
                    if algo in ("pd_greedy", "reg_pd") and not (
                        p.is_finite and 0 < p.p <= 1
                    ):
                        continue
                    try:
                        report, _, _ = execute_run(
                            inst, algo, p,
                            granularity=args.granularity,
                            relaxed=args.relaxed,
                            uniform_share=args.uniform_share,
                        )
                    except (InvalidInputError, ConfigurationError,
                            PreconditionError) as exc:
                        failures += 1
                        rows.append({**key, "error": str(exc)})
                        continue
                    rows.append({
                        **key,
                        "alg_welfare": report.alg_welfare,
                        "opt_value": report.opt_value,
                        "ratio": report.ratio,
                        "regime_label": report.regime_label,
                        "regime_bound": report.regime_bound,
                        "certificates_pass": all(
                            c.passed for c in report.certificates),
                    })
    rows.sort(key=lambda r: (r["n"], r["instance"], r["p"], r["algo"]))
    _write(_report_text(rows, args.format), args.out)
    return EXIT_OK


def cmd_opt(args) -> int:
    inst = load_instance(args.instance)
    p = PMeanParam.parse(args.p)
    result = solve_opt(inst, p, tol=args.tol, max_iters=args.max_iters)
    payload = {
        "opt_value": result.opt_value,
        "certified_gap": result.certified_gap,
        "iterations": result.iterations,
        "instance_hash": instance_hash(inst),
    }
    _write(json.dumps(payload, indent=2) + "\n", args.out)
    if args.allocation_out:
        save_allocation(result.allocation, args.allocation_out)
    return EXIT_OK


def cmd_adversary(args) -> int:
    p = PMeanParam.parse(args.p)
    opponent = make_allocator(args.opponent,
                              p=p if args.opponent in ("pd_greedy", "reg_pd") else None,
                              granularity=args.granularity)
    if args.opponent not in ("uniform",):
        from .allocators import compose_with_uniform
        opponent = compose_with_uniform(opponent, args.uniform_share)
    if args.family == "negative":
        L = args.L if args.L else int(np.ceil(np.log(args.n)))
        cfg = NegativeAdversaryConfig(n=args.n, p=p, L=L, alpha=args.alpha)
        run = run_negative_adversary(cfg, opponent)
    else:
        cfg = PositiveAdversaryConfig(n=args.n, p=p)
        run = run_positive_adversary(cfg, opponent)
    if args.instance_out:
        save_instance(run.instance, args.instance_out)
    if args.allocation_out:
        save_allocation(run.allocation, args.allocation_out)
    alg = p_mean_welfare(run.utilities, p)
    witness = p_mean_welfare(
        utilities_of(run.instance, run.explicit_allocation), p)
    payload = {
        "family": args.family,
        "n": args.n,
        "p": str(p),
        "m": run.instance.m,
        "opponent": args.opponent,
        "alg_welfare": alg,
        "witness_welfare": witness,
        "groups": {k: len(v) for k, v in run.groups.items()},
        "instance_hash": instance_hash(run.instance),
    }
    _write(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_certify(args) -> int:
    inst = load_instance(args.instance)
    p = PMeanParam.parse(args.p)
    report, trace, result = execute_run(
        inst, args.algo, p,
        granularity=args.granularity,
        relaxed=args.relaxed,
        uniform_share=args.uniform_share,
    )
    rows = [
        {
            "certificate": c.name,
            "instance_id": report.instance_hash,
            "t": "final",
            "beta": "",
            "measured": c.measured,
            "bound": c.bound,
            "pass": c.passed,
        }
        for c in report.certificates
    ]
    _write(_report_text(rows, "csv" if args.format == "csv" else args.format),
           args.out)
    if any(not c.passed for c in report.certificates):
        return EXIT_CERT_FAIL
    return EXIT_OK


def cmd_validate(args) -> int:
    inst = load_instance(args.instance)
    report = validate_instance(inst, tol=args.tol)
    payload = {
        "pass": report.passed,
        "realized_K": report.realized_K,
        "failing_agents": report.failing_agents(),
        "max_deficit": float(report.deficits.max()) if inst.n else 0.0,
    }
    _write(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK if report.passed else EXIT_CERT_FAIL


def _add_common(sp):
    sp.add_argument("--p", default="nash", help='p exponent: float, "nash", or "-inf"')
    sp.add_argument("--granularity", choices=["atomic", "waterfill"],
                    default="waterfill")
    sp.add_argument("--relaxed", choices=["assumed", "physical"], default="assumed")
    sp.add_argument("--uniform-share", type=float, default=0.5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.add_argument("--format", choices=["json", "csv"], default="json")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pmean-arena",
        description="Online p-mean welfare: allocators, benchmark, certificates",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("run", help="run one algorithm on one instance")
    sp.add_argument("--instance", help="instance JSON path")
    sp.add_argument("--n", type=int, help="generate a random instance instead")
    sp.add_argument("--m", type=int)
    sp.add_argument("--dist", default="uniform")
    sp.add_argument("--algo", required=True,
                    choices=["uniform", "nashian", "mixed", "pd_greedy", "reg_pd"])
    _add_common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="grid of runs over (n, p, algo)")
    sp.add_argument("--n", required=True, help="comma-separated n grid")
    sp.add_argument("--m", type=int)
    sp.add_argument("--algo", required=True, help="comma-separated algorithm ids")
    sp.add_argument("--instances", type=int, default=1,
                    help="random instances per n")
    sp.add_argument("--dist", default="uniform")
    _add_common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("opt", help="offline optimum of an instance")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-iters", type=int, default=5000)
    sp.add_argument("--allocation-out", default=None)
    _add_common(sp)
    sp.set_defaults(func=cmd_opt)

    sp = sub.add_parser("adversary", help="build an adaptive hard instance")
    sp.add_argument("--family", required=True, choices=["positive", "negative"])
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--L", type=int, default=None)
    sp.add_argument("--alpha", type=float, default=0.0)
    sp.add_argument("--opponent", default="uniform",
                    choices=["uniform", "nashian", "mixed", "pd_greedy", "reg_pd"])
    sp.add_argument("--instance-out", default=None)
    sp.add_argument("--allocation-out", default=None)
    _add_common(sp)
    sp.set_defaults(func=cmd_adversary)

    sp = sub.add_parser("certify", help="run the certificate suite on an instance")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--algo", required=True,
                    choices=["uniform", "nashian", "mixed", "pd_greedy", "reg_pd"])
    _add_common(sp)
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("validate", help="check monopolist sums of an instance")
    sp.add_argument("--instance", required=True)
    sp.add_argument("--tol", type=float, default=1e-6)
    _add_common(sp)
    sp.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (InvalidInputError, ConfigurationError, PreconditionError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
