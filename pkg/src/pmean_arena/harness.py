"""Run orchestration shared by the CLI and tests: build a run, benchmark
it against the offline optimum, evaluate the regime bound, and collect the
applicable certificates into a report."""

from __future__ import annotations

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from . import certificates as certs
from .allocators import (
    Allocator,
    RunTrace,
    compose_with_uniform,
    make_allocator,
    run_online,
)
from .benchmark import SolveResult, solve_opt
from .core import (
    Allocation,
    Instance,
    PMeanParam,
    instance_to_json,
    p_mean_welfare,
    utilities_of,
)

SCHEMA_VERSION = 1


def regime_bound(n: int, p: PMeanParam) -> tuple[str, float]:
    """The headline competitive-ratio regime for (n, p): label and value.

    p >= 1/log n -> 1/p; |p| <= 1/log n (incl. nash) -> log n;
    -1 <= p < -1/log n -> n^{|p|/(|p|+1)}; p <= -1 (incl. -inf) -> sqrt n.
    """
    logn = np.log(n) if n > 1 else 1.0
    thresh = 1.0 / logn
    if p.tag == "neg_infinity":
        return "sqrt(n)", float(np.sqrt(n))
    if p.tag == "nash":
        return "log(n)", float(logn)
    pv = p.p
    if pv >= thresh:
        return "1/p", float(1.0 / pv)
    if abs(pv) <= thresh:
        return "log(n)", float(logn)
    if pv >= -1.0:
        ap = abs(pv)
        return "n^(|p|/(|p|+1))", float(n ** (ap / (ap + 1.0)))
    return "sqrt(n)", float(np.sqrt(n))


def instance_hash(inst: Instance) -> str:
    return hashlib.sha256(instance_to_json(inst).encode()).hexdigest()[:16]


@dataclass
class RunReport:
    schema_version: int
    instance_hash: str
    n: int
    m: int
    algorithm: str
    granularity: str | None
    relaxed: str
    p: str
    alg_welfare: float
    opt_value: float
    certified_gap: float
    ratio: float | None
    regime_label: str
    regime_bound: float
    certificates: list = field(default_factory=list)
    wall_time: float = 0.0
    utilities: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "instance_hash": self.instance_hash,
            "n": self.n,
            "m": self.m,
            "algorithm": self.algorithm,
            "granularity": self.granularity,
            "relaxed": self.relaxed,
            "p": self.p,
            "alg_welfare": self.alg_welfare,
            "opt_value": self.opt_value,
            "certified_gap": self.certified_gap,
            "ratio": self.ratio,
            "regime_label": self.regime_label,
            "regime_bound": self.regime_bound,
            "certificates": [
                {
                    "name": c.name,
                    "pass": c.passed,
                    "measured": c.measured,
                    "bound": c.bound,
                }
                for c in self.certificates
            ],
            "wall_time": self.wall_time,
        }


def execute_run(inst: Instance, algo: str, p: PMeanParam,
                granularity: str = "waterfill", relaxed: str = "assumed",
                uniform_share: float = 0.5, solve: bool = True,
                with_certificates: bool = True) -> tuple[RunReport, RunTrace, SolveResult | None]:
    """One full benchmark run: allocate online, solve offline, certify."""
    t0 = time.monotonic()
    pd_algo = algo in ("pd_greedy", "reg_pd")
    allocator = make_allocator(algo, p=p if pd_algo else None,
                               granularity=granularity)
    if relaxed == "physical" and algo not in ("uniform",):
        allocator = compose_with_uniform(allocator, uniform_share)
        base = "physical"
    else:
        base = "relaxed" if relaxed == "assumed" else "physical"
    trace = run_online(allocator, inst, base=base)
    alg_u = trace.final_utilities
    alg_welfare = p_mean_welfare(alg_u, p)

    result = solve_opt(inst, p) if solve else None
    opt_value = result.opt_value if result else float("nan")
    gap = result.certified_gap if result else float("nan")
    ratio = (opt_value / alg_welfare) if (result and alg_welfare > 0) else None
    label, bound = regime_bound(inst.n, p)

    cert_rows = []
    if with_certificates and result is not None:
        cert_rows = run_certificates(trace, result, algo, p, relaxed)

    report = RunReport(
        schema_version=SCHEMA_VERSION,
        instance_hash=instance_hash(inst),
        n=inst.n,
        m=inst.m,
        algorithm=algo,
        granularity=granularity if algo in ("nashian", "mixed", "pd_greedy") else None,
        relaxed=relaxed,
        p=str(p),
        alg_welfare=float(alg_welfare),
        opt_value=float(opt_value),
        certified_gap=float(gap),
        ratio=None if ratio is None else float(ratio),
        regime_label=label,
        regime_bound=float(bound),
        certificates=cert_rows,
        wall_time=time.monotonic() - t0,
        utilities=alg_u,
    )
    return report, trace, result


def run_certificates(trace: RunTrace, result: SolveResult, algo: str,
                     p: PMeanParam, relaxed: str) -> list:
    """The certificate suite applicable to the algorithm family."""
    inst = trace.instance
    n = inst.n
    rows = []
    opt_lower = max(0.0, result.opt_value)  # solver value is itself feasible
    if algo in ("nashian", "mixed") and relaxed == "assumed":
        # Fundamental Lemma against the solver's allocation and uniform.
        bound = np.log(n + 1)
        for name, ref in (
            ("fundamental_lemma_opt", result.allocation),
            ("fundamental_lemma_uniform", Allocation(np.full((n, inst.m), 1.0 / n))),
            ("fundamental_lemma_self", trace.allocation),
        ):
            profile = certs.fundamental_lemma_profile(trace, ref)
            worst = float(profile.max()) if profile.size else 0.0
            rows.append(certs.CertificateReport(
                name=name, passed=bool(worst <= bound + certs.CERT_TOL),
                measured=worst, bound=float(bound)))
    if algo == "mixed" and relaxed == "assumed" and p.abs_p >= 1.0 and opt_lower > 0:
        K = float(inst.monopolist.max() / inst.monopolist.min())
        rows.append(certs.utility_floor_check(trace.final_utilities, opt_lower, p, K=K))
        rows.append(certs.critical_count_at_beta_star(
            trace.final_utilities, np.zeros(n), opt_lower, p))
    if algo in ("pd_greedy", "reg_pd"):
        dual = certs.DualAssignment(
            alphas=np.asarray(trace.state.alphas),
            gammas=trace.state.gammas,
            p=p,
        )
        rows.append(certs.check_dual_feasibility(inst, dual))
        P = certs.primal_objective(trace.final_utilities, p.p)
        D = certs.dual_objective(dual)
        Gamma = 1.0 / p.p if algo == "pd_greedy" else np.log(n + 1) + 1.0
        rows.append(certs.check_pd_ratio(P, D, Gamma, p.p))
    return rows
