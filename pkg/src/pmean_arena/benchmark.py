"""Offline optimal benchmark.

``solve_opt`` maximizes the p-mean welfare over the product of item
simplices with conditional gradient (Frank-Wolfe).  The linear oracle is a
per-item argmax of gradient-weighted values, the duality gap certifies the
result, and no projection or external solver is needed.

``brute_force_opt`` is an independent grid-enumeration oracle for tiny
instances, used only by tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .core import (
    Allocation,
    Instance,
    InvalidInputError,
    PMeanParam,
    p_mean_welfare,
    utilities_of,
)

NASH_FLOOR = 1e-12  # utility floor inside the log objective
EGALITARIAN_SURROGATE_P = -64.0

# Use a sparse matrix path when the value matrix is mostly zeros.
_SPARSE_DENSITY_CUTOFF = 0.25
_SPARSE_MIN_ENTRIES = 1 << 16


@dataclass(frozen=True)
class SolveResult:
    allocation: Allocation
    opt_value: float
    certified_gap: float
    iterations: int
    utilities: np.ndarray


def _objective(U: np.ndarray, p: PMeanParam) -> float:
    """Monotone-transformed objective F (same argmax, better conditioning)."""
    if p.tag == "nash":
        return float(np.log(np.maximum(U, NASH_FLOOR)).sum())
    pv = p.p
    return float((np.maximum(U, 0.0) ** pv).sum() / pv)


def _grad_weights(U: np.ndarray, p: PMeanParam) -> np.ndarray:
    """dF/dU_a, always positive on positive utilities."""
    if p.tag == "nash":
        return 1.0 / np.maximum(U, NASH_FLOOR)
    return np.maximum(U, NASH_FLOOR) ** (p.p - 1.0)


def _welfare_from_objective(F: float, n: int, p: PMeanParam) -> float:
    """Convert the transformed objective back to Eq-(1) welfare units."""
    if p.tag == "nash":
        return float(np.exp(F / n))
    pv = p.p
    val = pv * F / n
    if val <= 0 and pv < 0:
        return np.inf  # transformed objective above the p<0 range limit
    return float(val ** (1.0 / pv))


class _ValueOp:
    """Value-matrix operations with an optional sparse fast path."""

    def __init__(self, inst: Instance):
        self.n, self.m = inst.n, inst.m
        dense = inst.value_matrix()
        nnz = np.count_nonzero(dense)
        size = dense.size
        if size >= _SPARSE_MIN_ENTRIES and nnz < _SPARSE_DENSITY_CUTOFF * size:
            self.csc = sparse.csc_array(dense)
            self.dense = None
        else:
            self.csc = None
            self.dense = dense
        self._col_item_value_cache: dict[int, np.ndarray] = {}

    def vertex_oracle(self, w: np.ndarray) -> tuple[np.ndarray, float]:
        """Per-item argmax of w_a * v_ai; returns (assignment, score sum)."""
        if self.dense is not None:
            scores = self.dense * w[:, None]
            assign = np.argmax(scores, axis=0)
            total = scores[assign, np.arange(self.m)].sum()
            return assign, float(total)
        S = self.csc.multiply(w[:, None]).tocsc()
        assign = np.ravel(S.argmax(axis=0)).astype(np.intp)
        total = float(S.max(axis=0).sum())
        return assign, total

    def item_values(self, assign: np.ndarray) -> np.ndarray:
        """values[assign[i], i] for every item i."""
        if self.dense is not None:
            return self.dense[assign, np.arange(self.m)]
        rows = self.csc.tocoo()
        out = np.zeros(self.m)
        mask = rows.row == assign[rows.col]
        out[rows.col[mask]] = rows.data[mask]
        return out

    def vertex_utilities(self, assign: np.ndarray) -> np.ndarray:
        vals = self.item_values(assign)
        return np.bincount(assign, weights=vals, minlength=self.n)


def solve_opt(inst: Instance, p: PMeanParam, tol: float = 1e-6,
              max_iters: int = 5000, x0: np.ndarray | None = None) -> SolveResult:
    """Frank-Wolfe maximization of p-mean welfare over item simplices.

    Returns the best allocation found, its exact welfare, and a certified
    upper bound on how far the true optimum can sit above it (derived from
    the final duality gap).  Non-convergence is not an error: the gap is
    simply reported honestly.
    """
    if p.tag == "neg_infinity":
        return _solve_egalitarian(inst, tol=tol, max_iters=max_iters, x0=x0)
    n, m = inst.n, inst.m
    monop = (inst.value_matrix().sum(axis=1) if m else np.zeros(n))
    if p.tag == "nash" or p.p < 0:
        if np.any(monop <= 0):
            # some agent values nothing: OPT = 0 for p <= 0
            return SolveResult(Allocation(np.zeros((n, m))), 0.0, 0.0, 0,
                               np.zeros(n))
    if m == 0:
        return SolveResult(Allocation(np.zeros((n, 0))), 0.0, 0.0, 0, np.zeros(n))

    op = _ValueOp(inst)
    if x0 is None:
        x0 = np.full((n, m), 1.0 / n)
    else:
        x0 = np.asarray(x0.x if isinstance(x0, Allocation) else x0, dtype=float)
        if x0.shape != (n, m):
            raise InvalidInputError("warm start shape mismatch")
    U = utilities_of(inst, x0)
    F = _objective(U, p)

    # x is kept implicitly: a shrinking weight on x0 plus one weight per
    # Frank-Wolfe vertex (an item -> agent assignment).
    base_weight = 1.0
    vertices: list[np.ndarray] = []
    weights: list[float] = []
    gap = np.inf
    it = 0
    for it in range(1, max_iters + 1):
        w = _grad_weights(U, p)
        assign, best_total = op.vertex_oracle(w)
        gap = best_total - float(w @ U)
        scale = max(1.0, abs(F))
        if gap <= tol * scale:
            break
        U_vertex = op.vertex_utilities(assign)
        step = 2.0 / (it + 2.0)
        # Backtrack from the nominal step until the objective improves
        # (keeps the iterate sequence monotone).
        improved = False
        for _ in range(60):
            U_new = (1.0 - step) * U + step * U_vertex
            F_new = _objective(U_new, p)
            if F_new >= F:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        U, F = U_new, F_new
        base_weight *= 1.0 - step
        for k in range(len(weights)):
            weights[k] *= 1.0 - step
        vertices.append(assign)
        weights.append(step)

    x = base_weight * x0
    idx = np.arange(m)
    for assign, wt in zip(vertices, weights):
        x[assign, idx] += wt
    alloc = Allocation(np.clip(x, 0.0, None))
    U_exact = utilities_of(inst, alloc)
    opt_value = p_mean_welfare(U_exact, p)
    # Certified upper bound on the true optimum: concavity of F gives
    # F* <= F + gap; convert to welfare units.
    F_exact = _objective(U_exact, p)
    upper = _welfare_from_objective(F_exact + max(gap, 0.0), n, p)
    certified_gap = max(0.0, upper - opt_value) if np.isfinite(upper) else np.inf
    return SolveResult(alloc, opt_value, certified_gap, it, U_exact)


def _solve_egalitarian(inst: Instance, tol: float, max_iters: int,
                       x0: np.ndarray | None) -> SolveResult:
    """p = -inf via the p = -64 surrogate.

    For any u, min(u) <= W_{-64}(u) <= n^{1/64} min(u), so the surrogate's
    certified upper bound also bounds the egalitarian optimum; the reported
    value is the exact min-utility of the allocation found.
    """
    surrogate = PMeanParam.of(EGALITARIAN_SURROGATE_P)
    res = solve_opt(inst, surrogate, tol=tol, max_iters=max_iters, x0=x0)
    if res.opt_value == 0.0 and res.iterations == 0:
        return res
    opt_value = float(res.utilities.min())
    upper = res.opt_value + res.certified_gap  # >= W_-64 at the true egal opt
    certified_gap = max(0.0, upper - opt_value)
    return SolveResult(res.allocation, opt_value, certified_gap,
                       res.iterations, res.utilities)


def opt_utilities(result: SolveResult, inst: Instance) -> np.ndarray:
    """The per-agent utilities of the solver's allocation (zero base)."""
    return utilities_of(inst, result.allocation)


# ---------------------------------------------------------------------------
# Brute-force oracle (tests only)
# ---------------------------------------------------------------------------


def _p_code(p: PMeanParam) -> tuple[int, float]:
    if p.tag == "nash":
        return 0, 0.0
    if p.tag == "neg_infinity":
        return 2, 0.0
    return 1, p.p


def brute_force_opt(inst: Instance, p: PMeanParam, grid_step: float) -> float:
    """Exhaustive grid search over allocations of up to 3 items to up to 3
    agents.

    Welfare is monotone non-decreasing in every allocation entry, so any
    partially-allocated item can be topped up on-grid without losing
    welfare; it therefore suffices to enumerate fully-allocated columns.
    Instances with fewer than 3 agents are padded with a phantom agent of
    constant utility, which shifts every enumerated score by the same
    amount; the decode step removes the shift.
    """
    if inst.n > 3 or inst.m > 3:
        raise InvalidInputError("brute force limited to n <= 3, m <= 3")
    k = round(1.0 / grid_step)
    if abs(k * grid_step - 1.0) > 1e-9:
        raise InvalidInputError("grid_step must divide 1")
    if inst.m == 0:
        return 0.0
    n = inst.n
    code, pv = _p_code(p)
    # Phantom utility chosen to be neutral for each transform: 0 vanishes
    # in positive power sums, 1 is the product/negative-sum unit, and a
    # huge value never attains the minimum.
    if code == 2:
        phantom = 1e18
    elif code == 1 and pv > 0:
        phantom = 0.0
    else:
        phantom = 1.0
    n_pad = 3 - n
    contribs = []
    for j, it in enumerate(inst.items):
        splits = _simplex_grid(n, k)
        c = splits * it.values[None, :]
        pad_val = phantom if j == 0 else 0.0
        c = np.column_stack([c] + [np.full(len(c), pad_val)] * n_pad)
        contribs.append(c)
    while len(contribs) < 3:
        contribs.append(np.zeros((1, 3)))
    from ._bruteforce import max_transformed_welfare
    best = max_transformed_welfare(contribs, code, pv)
    return _decode_objective(best, n, n_pad, code, pv)


def _simplex_grid(n: int, k: int) -> np.ndarray:
    """All ways to split k grid units among n agents, as fractions."""
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        a = np.arange(k + 1)
        return np.column_stack([a, k - a]) / k
    out = []
    for a in range(k + 1):
        b = np.arange(k - a + 1)
        out.append(np.column_stack([np.full(len(b), a), b, k - a - b]))
    return np.vstack(out) / k


def _decode_objective(best: float, n: int, n_pad: int, code: int,
                      pv: float) -> float:
    """Invert the monotone transform used inside the enumeration kernel,
    removing the phantom-agent contribution."""
    if code == 0:  # kernel maximized the product; phantom factor is 1
        return float(best ** (1.0 / n))
    if code == 2:  # kernel maximized the min; phantom never attains it
        return float(best)
    if pv > 0:  # kernel maximized sum u^p; phantom contributes 0
        return float((best / n) ** (1.0 / pv))
    # Negative p: the kernel maximized -sum u^p and each phantom agent
    # contributed -1; -inf means some agent is always at zero utility.
    if not np.isfinite(best):
        return 0.0
    return float((-(best + n_pad) / n) ** (1.0 / pv))
