"""Mechanical certificates for completed runs.

Each check measures a quantity on a concrete run and compares it against
the closed-form bound that the theory promises, producing a
``CertificateReport``.  Nothing here is symbolic: a passing certificate
witnesses one run, not a theorem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Instance, InvalidInputError, PMeanParam
from .allocators import RunTrace, regularizer_scale

CERT_TOL = 1e-9


@dataclass(frozen=True)
class DualAssignment:
    """A run's dual variables: one alpha per item, one gamma per agent."""

    alphas: np.ndarray
    gammas: np.ndarray
    p: PMeanParam

    def __post_init__(self):
        object.__setattr__(self, "alphas", np.asarray(self.alphas, dtype=float))
        object.__setattr__(self, "gammas", np.asarray(self.gammas, dtype=float))
        if not self.p.is_finite or not (0 < self.p.p <= 1):
            raise InvalidInputError("dual assignment needs finite p in (0, 1]")
        if np.any(self.alphas < -1e-12) or np.any(self.gammas < 0):
            raise InvalidInputError("duals must be non-negative")


@dataclass(frozen=True)
class CertificateReport:
    name: str
    passed: bool
    measured: float
    bound: float
    worst_index: int | None = None
    detail: str = ""


def _report(name, measured, bound, tol, worst=None, detail="") -> CertificateReport:
    return CertificateReport(
        name=name,
        passed=bool(measured <= bound + tol),
        measured=float(measured),
        bound=float(bound),
        worst_index=worst,
        detail=detail,
    )


# ---------------------------------------------------------------------------
# Primal-dual (finite positive p)
# ---------------------------------------------------------------------------


def primal_objective(u, p: float) -> float:
    """P = (1/p) sum u_a^p."""
    if not (0 < p <= 1):
        raise InvalidInputError("primal objective needs 0 < p <= 1")
    u = np.asarray(u, dtype=float)
    return float((u**p).sum() / p)


def dual_objective(d: DualAssignment) -> float:
    """D = sum alpha_i + (1/p - 1) sum gamma_a^p (unit item durations)."""
    p = d.p.p
    return float(d.alphas.sum() + (1.0 / p - 1.0) * (d.gammas**p).sum())


def check_dual_feasibility(inst: Instance, d: DualAssignment,
                           tol: float = CERT_TOL) -> CertificateReport:
    """alpha_i >= v_ai * gamma_a^{-(1-p)} for every item and agent.

    gammas must be the final duals of the run; a zero gamma on an agent
    with positive value makes the right side infinite (reported as a
    violation).
    """
    p = d.p.p
    V = inst.value_matrix()
    if V.shape[1] != d.alphas.size:
        raise InvalidInputError("alpha count does not match item count")
    with np.errstate(divide="ignore"):
        weights = np.where(d.gammas > 0, d.gammas ** -(1.0 - p), np.inf)
    if p == 1.0:
        weights = np.ones(inst.n)
    rhs = V * weights[:, None]
    rhs[V == 0] = 0.0
    violation = rhs - d.alphas[None, :]
    worst_flat = int(np.argmax(violation))
    worst_a, worst_i = np.unravel_index(worst_flat, violation.shape)
    max_violation = float(violation[worst_a, worst_i])
    return _report(
        "dual_feasibility", max_violation, 0.0, tol,
        worst=worst_i,
        detail=f"worst agent {worst_a}, item {worst_i}",
    )


def check_pd_ratio(P: float, D: float, Gamma: float, p: float,
                   tol: float = CERT_TOL) -> CertificateReport:
    """The ratio condition Gamma^p * P >= D."""
    if not (0 < p <= 1):
        raise InvalidInputError("ratio condition needs 0 < p <= 1")
    return _report("pd_ratio", D, Gamma**p * P, tol,
                   detail=f"Gamma={Gamma!r}, P={P!r}, D={D!r}")


# ---------------------------------------------------------------------------
# Fundamental Lemma
# ---------------------------------------------------------------------------


def fundamental_lemma_gap(trace: RunTrace, reference, t: int) -> float:
    """(1/n) sum_a refU_a(t) / U_a(t) through the first t items.

    ``reference`` is any feasible allocation of the trace's instance; its
    cumulative utility refU uses zero base, while U is the trace's running
    (relaxed) utility.  Callers assert the result <= log(n+1).
    """
    inst = trace.instance
    ref_x = reference.x if hasattr(reference, "x") else np.asarray(reference, dtype=float)
    if ref_x.shape != (inst.n, inst.m):
        raise InvalidInputError("reference allocation shape mismatch")
    if not (0 <= t <= inst.m):
        raise InvalidInputError("item index out of range")
    if t == 0:
        return 0.0
    V = inst.value_matrix()[:, :t]
    ref_u = np.einsum("ai,ai->a", V, ref_x[:, :t])
    u_t = trace.state.u if t == inst.m else trace.u_before[t]
    if np.any(u_t <= 0):
        raise InvalidInputError("trace utilities must be positive (relaxed run)")
    return float(np.mean(ref_u / u_t))


def fundamental_lemma_profile(trace: RunTrace, reference) -> np.ndarray:
    """The gap at every item boundary t = 1..m, vectorized."""
    inst = trace.instance
    ref_x = reference.x if hasattr(reference, "x") else np.asarray(reference, dtype=float)
    if ref_x.shape != (inst.n, inst.m):
        raise InvalidInputError("reference allocation shape mismatch")
    V = inst.value_matrix()
    ref_cum = np.cumsum(V * ref_x, axis=1)  # (n, m): refU through item t
    u_at = np.vstack([trace.u_before[1:], trace.state.u])  # (m, n)
    return np.mean(ref_cum.T / u_at, axis=1)


# ---------------------------------------------------------------------------
# Bad and critical agents (negative p)
# ---------------------------------------------------------------------------


def bad_agent_threshold(n: int) -> float:
    return float(np.log(n + 1))


def count_bad_agents(u, beta: float, opt: float, p: PMeanParam,
                     tol: float = CERT_TOL) -> CertificateReport:
    """Fraction of agents with u_a <= beta*opt vs (beta log(n+1))^{|p|/(|p|+1)}."""
    if beta <= 0 or opt <= 0:
        raise InvalidInputError("need beta > 0 and opt > 0")
    ap = p.abs_p
    if p.tag == "finite" and p.p >= 0:
        raise InvalidInputError("bad-agent bound applies to negative p")
    u = np.asarray(u, dtype=float)
    n = u.size
    measured = float(np.count_nonzero(u <= beta * opt)) / n
    if np.isinf(ap):
        exponent = 1.0  # |p|/(|p|+1) -> 1 as p -> -inf
    else:
        exponent = ap / (ap + 1.0)
    bound = (beta * np.log(n + 1)) ** exponent
    return _report("bad_agents", measured, min(1.0, bound), tol,
                   detail=f"beta={beta!r}, unclipped bound={bound!r}")


def count_critical_agents(u, remaining, beta: float, opt: float,
                          p: PMeanParam, tol: float = CERT_TOL) -> CertificateReport:
    """Fraction with u_a + remaining_a/Phi <= beta*opt vs the two-term bound.

    The bound is max{(2 beta log(n+1))^{|p|/(|p|+1)}, (2 Phi beta)^{|p|}};
    it applies for p <= -1.
    """
    if beta < 0 or opt <= 0:
        raise InvalidInputError("need beta >= 0 and opt > 0")
    ap = p.abs_p
    if not (ap >= 1.0):
        raise InvalidInputError("critical-agent bound applies to p <= -1")
    u = np.asarray(u, dtype=float)
    n = u.size
    phi = regularizer_scale(n)
    reg = u + np.asarray(remaining, dtype=float) / phi
    measured = float(np.count_nonzero(reg <= beta * opt)) / n
    if beta == 0.0:
        return _report("critical_agents", measured, 0.0, tol)
    if np.isinf(ap):
        term1 = 1.0 if 2 * beta * np.log(n + 1) >= 1 else 0.0
        term2 = 1.0 if 2 * phi * beta >= 1 else 0.0
    else:
        term1 = (2 * beta * np.log(n + 1)) ** (ap / (ap + 1.0))
        term2 = (2 * phi * beta) ** ap
    bound = max(term1, term2)
    return _report("critical_agents", measured, min(1.0, bound), tol,
                   detail=f"beta={beta!r}, unclipped bound={bound!r}")


def beta_star(n: int, p: PMeanParam) -> float:
    """beta* = (1/2) n^{-1/2 - 1/(2|p|)} (log(n+1))^{-1/2 + 1/(2|p|)}."""
    ap = p.abs_p
    if np.isinf(ap):
        inv = 0.0
    else:
        if ap < 1.0:
            raise InvalidInputError("beta* is defined for p <= -1")
        inv = 1.0 / (2.0 * ap)
    ln = np.log(n + 1)
    return float(0.5 * n ** (-0.5 - inv) * ln ** (-0.5 + inv))


def critical_count_at_beta_star(u, remaining, opt: float, p: PMeanParam,
                                tol: float = CERT_TOL) -> CertificateReport:
    """At beta = beta*, the critical-agent COUNT is at most sqrt(n log(n+1))."""
    u = np.asarray(u, dtype=float)
    n = u.size
    phi = regularizer_scale(n)
    bstar = beta_star(n, p)
    reg = u + np.asarray(remaining, dtype=float) / phi
    count = float(np.count_nonzero(reg <= bstar * opt))
    return _report("critical_count_beta_star", count,
                   float(np.sqrt(n * np.log(n + 1))), tol,
                   detail=f"beta*={bstar!r}")


def utility_floor_check(final_u, opt: float, p: PMeanParam, K: float = 1.0,
                        tol: float = CERT_TOL) -> CertificateReport:
    """min_a u_a >= (beta*/K) * opt for a completed relaxed Mixed Greedy run."""
    u = np.asarray(final_u, dtype=float)
    n = u.size
    floor = beta_star(n, p) / K * opt
    # Phrase as measured <= bound: floor - min(u) <= 0.
    return _report("utility_floor", floor - float(u.min()), 0.0, tol,
                   detail=f"min_u={float(u.min())!r}, floor={floor!r}")


# ---------------------------------------------------------------------------
# Final-ratio constants
# ---------------------------------------------------------------------------


def nashian_ratio_bound(n: int, p: PMeanParam) -> float:
    """Explicit-constant ratio bound for relaxed Nashian Greedy, -1 <= p < 0
    or nash: OPT/ALG <= 2 (n+1)^{|p|} log(n+1)."""
    ap = 0.0 if p.tag == "nash" else p.abs_p
    if ap > 1.0:
        raise InvalidInputError("bound stated for -1 <= p <= 0")
    return float(2.0 * (n + 1) ** ap * np.log(n + 1))


def mixed_ratio_bound(n: int, p: PMeanParam) -> float:
    """Explicit-constant ratio bound for relaxed Mixed Greedy, p <= -1:
    OPT/ALG <= ((|p|/(|p|+1))^{1/|p|} 2^{-|p|/(|p|+1)})^{-1} sqrt(n log(n+1))."""
    ap = p.abs_p
    if np.isinf(ap):
        const = 0.5  # limit of the constant as |p| -> inf
    else:
        if ap < 1.0:
            raise InvalidInputError("bound stated for p <= -1")
        const = (ap / (ap + 1.0)) ** (1.0 / ap) * 2.0 ** (-ap / (ap + 1.0))
    return float(np.sqrt(n * np.log(n + 1)) / const)


def bad_agents_opt_mass_check(opt_u, alg_u, beta: float, opt: float,
                              p: PMeanParam, tol: float = CERT_TOL) -> CertificateReport:
    """At the final time, the beta-bad agents' average OPT utility is at
    most beta log(n+1) OPT (their unseen monopolist value is 0 at t=T)."""
    opt_u = np.asarray(opt_u, dtype=float)
    alg_u = np.asarray(alg_u, dtype=float)
    n = alg_u.size
    bad = alg_u <= beta * opt
    measured = float(opt_u[bad].sum()) / n
    bound = beta * np.log(n + 1) * opt
    return _report("bad_agents_opt_mass", measured, bound, tol,
                   detail=f"beta={beta!r}, bad_count={int(bad.sum())}")
