"""Online allocation rules.

All rules consume items one at a time and never revisit a decision.  Two
granularities are supported where it matters:

* ``atomic`` — the whole item goes to the instantaneous argmax/argmin,
  evaluated once at the item's arrival;
* ``waterfill`` — the exact continuous rule within the item: allocation
  flows to the current argmax (argmin) at every instant, computed in
  closed form per constant-rate interval.

State is single-owner mutable; one run is strictly sequential.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    Allocation,
    ConfigurationError,
    Instance,
    InvalidInputError,
    Item,
    PMeanParam,
    PreconditionError,
    utilities_of,
    validate_instance,
)


def regularizer_scale(n: int) -> float:
    """Phi = sqrt(n * log(n + 1)), the regularizer denominator."""
    return float(np.sqrt(n * np.log(n + 1)))


@dataclass
class AllocatorState:
    """Mutable per-run state shared by all allocation rules.

    Only the fields an algorithm needs are populated: ``remaining``/``phi``
    for the regularized egalitarian rule, ``gammas``/``alphas``/``p`` for
    the primal-dual rules.
    """

    n: int
    u: np.ndarray
    remaining: np.ndarray | None = None
    phi: float | None = None
    gammas: np.ndarray | None = None
    alphas: list = field(default_factory=list)
    p: PMeanParam | None = None


@dataclass
class StepOutcome:
    """Result of allocating one item: fractions per agent, optional dual price."""

    fractions: np.ndarray
    alpha: float | None = None


@dataclass
class RunTrace:
    """Everything a certificate needs about a completed run."""

    instance: Instance
    allocation: Allocation
    state: AllocatorState
    u_before: np.ndarray  # (m, n): utilities at each item's arrival
    remaining_before: np.ndarray | None  # (m, n) when the rule tracks remaining
    base: np.ndarray  # the assumed base credit included in u

    @property
    def final_utilities(self) -> np.ndarray:
        return self.state.u


# ---------------------------------------------------------------------------
# Closed-form waterfills
# ---------------------------------------------------------------------------


def _nashian_waterfill(u: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Fractions of one unit-supply item under the continuous Nashian rule.

    The item flows to the current argmax of v_a / u_a; active agents share
    it so their ratios stay equal and fall together.  With r_a = v_a / u_a
    sorted descending, spending the item down to common ratio rho costs
    sum over active agents of (1/rho - 1/r_a), so the final level solves
    k/rho - sum_{j<=k} 1/r_j = 1 for the correct active-set size k.
    """
    f = np.zeros_like(values)
    pos = np.nonzero(values > 0)[0]
    if pos.size == 0:
        return f
    if np.any(u[pos] == 0):
        raise PreconditionError("Nashian rule needs positive utility for every "
                                "agent that values the item")
    r = values[pos] / u[pos]
    order = pos[np.argsort(-r, kind="stable")]
    r_sorted = values[order] / u[order]
    inv_cum = np.cumsum(1.0 / r_sorted)
    k_range = np.arange(1, r_sorted.size + 1)
    rho_cand = k_range / (1.0 + inv_cum)
    # Valid k: the candidate level sits above the next agent's ratio.
    next_r = np.append(r_sorted[1:], 0.0)
    valid = rho_cand >= next_r - 1e-15
    k = int(np.argmax(valid))  # first valid k (ordered by construction)
    rho = rho_cand[k]
    active = order[: k + 1]
    f[active] = np.maximum(0.0, 1.0 / rho - u[active] / values[active])
    return _renormalize_overshoot(f)


def _renormalize_overshoot(f: np.ndarray) -> np.ndarray:
    """Scale a full-spend fraction vector back onto the simplex.

    The closed forms spend the whole item, so the fractions sum to 1 up to
    rounding; dividing by small item values can overshoot by ~1e-11, which
    would violate column feasibility downstream.
    """
    total = f.sum()
    if total > 1.0:
        f /= total
    return f


def _egalitarian_waterfill(levels: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Fractions of one unit-supply item under max-min level raising.

    ``levels`` are the regularized utilities at the item's arrival; the item
    flows to the current argmin among positive-value agents.  Raising the
    active set to level L costs sum (L - g_a)/v_a, so the final level solves
    sum_{j<=k} (L - g_j)/v_j = 1 for the correct active-set size k.
    """
    f = np.zeros_like(values)
    pos = np.nonzero(values > 0)[0]
    if pos.size == 0:
        return f
    g = levels[pos]
    order = pos[np.argsort(g, kind="stable")]
    g_sorted = levels[order]
    v_sorted = values[order]
    inv_v = np.cumsum(1.0 / v_sorted)
    gv = np.cumsum(g_sorted / v_sorted)
    level_cand = (1.0 + gv) / inv_v
    next_g = np.append(g_sorted[1:], np.inf)
    valid = level_cand <= next_g + 1e-15
    k = int(np.argmax(valid))
    level = level_cand[k]
    active = order[: k + 1]
    f[active] = np.maximum(0.0, (level - levels[active]) / values[active])
    return _renormalize_overshoot(f)


def _pd_waterfill(u: np.ndarray, gammas: np.ndarray, values: np.ndarray,
                  p: float) -> tuple[np.ndarray, float]:
    """Continuous primal-dual greedy within one item, with its dual price.

    The item flows to the current argmax of the priority v_a * gamma_a^{-(1-p)}
    with gamma_a = u_a / p.  Active agents share flow so priorities stay
    equal; at common priority pi agent a holds u_a(pi) = p * (v_a/pi)^q with
    q = 1/(1-p).  Returns the fractions and the exact integral of the
    running priority over the item (the dual price alpha for the item).
    """
    q = 1.0 / (1.0 - p)
    f = np.zeros_like(values)
    pos = np.nonzero(values > 0)[0]
    if pos.size == 0:
        return f, 0.0
    v = values[pos]
    g = gammas[pos]
    with np.errstate(divide="ignore"):
        pri = np.where(g > 0, v * g ** -(1.0 - p), np.inf)
    order = np.argsort(-pri, kind="stable")
    v_sorted = v[order]
    u_sorted = u[pos][order]
    pri_sorted = pri[order]
    # Find the final common priority pi*: with active set of size k,
    # A_k * pi^{-q} - C_k = budget(=1), A_k = sum p v^{q-1}, C_k = sum u/v.
    A = np.cumsum(p * v_sorted ** (q - 1.0))
    C = np.cumsum(u_sorted / v_sorted)
    pi_cand = (A / (1.0 + C)) ** (1.0 / q)
    next_pri = np.append(pri_sorted[1:], 0.0)
    valid = pi_cand >= next_pri - 1e-15
    k = int(np.argmax(valid))
    pi_star = pi_cand[k]
    active_local = order[: k + 1]
    active = pos[active_local]
    new_u = p * (v_sorted[: k + 1] / pi_star) ** q
    f[active] = np.maximum(0.0, (new_u - u_sorted[: k + 1]) / v_sorted[: k + 1])
    f = _renormalize_overshoot(f)
    # alpha = integral of pi over the item.  Per phase j (active set 1..j+1),
    # pi runs from pri_sorted[j] down to the next entry level (or pi*), and
    # d(fraction) = -q A_j pi^{-q-1} dpi, so the phase contributes
    # q A_j (lo^{1-q} - hi^{1-q}) / (q - 1).  pi = inf contributes 0.
    alpha = 0.0
    for j in range(k + 1):
        hi = pri_sorted[j]
        lo = pri_sorted[j + 1] if j < k else pi_star
        lo = max(lo, pi_star)
        if hi <= lo:
            continue
        hi_term = 0.0 if np.isinf(hi) else hi ** (1.0 - q)
        alpha += q * A[j] * (lo ** (1.0 - q) - hi_term) / (q - 1.0)
    return f, float(alpha)


# ---------------------------------------------------------------------------
# Step operations (mutate state, return the step's outcome)
# ---------------------------------------------------------------------------


def allocate_uniform(n: int) -> StepOutcome:
    """Everyone gets 1/n of the item."""
    if n < 1:
        raise InvalidInputError("need at least one agent")
    return StepOutcome(fractions=np.full(n, 1.0 / n))


def allocate_nashian_atomic(state: AllocatorState, item: Item,
                            scale: float = 1.0) -> StepOutcome:
    """Whole item to the argmax of v_a / u_a (lowest index on ties)."""
    values = item.values * scale
    f = np.zeros(state.n)
    pos = np.nonzero(values > 0)[0]
    if pos.size:
        if np.any(state.u[pos] == 0):
            raise PreconditionError("Nashian rule needs positive utility for "
                                    "every agent that values the item")
        ratios = values[pos] / state.u[pos]
        winner = pos[int(np.argmax(ratios))]
        f[winner] = 1.0
        state.u[winner] += values[winner]
    return StepOutcome(fractions=f * scale if scale != 1.0 else f)


def allocate_nashian_waterfill(state: AllocatorState, item: Item,
                               scale: float = 1.0) -> StepOutcome:
    """Exact continuous Nashian greedy within the item."""
    values = item.values * scale
    f = _nashian_waterfill(state.u, values)
    state.u += values * f
    return StepOutcome(fractions=f * scale if scale != 1.0 else f)


def allocate_egalitarian_regularized(state: AllocatorState, item: Item,
                                     mode: str = "waterfill",
                                     scale: float = 1.0,
                                     decrement_remaining: bool = True) -> StepOutcome:
    """Item to the smallest regularized utility u_a + remaining_a / phi.

    Only agents with positive value participate.  ``remaining`` is
    decremented by the full (unscaled) item values after the step unless the
    caller manages it (Mixed Greedy decrements once across its two halves).
    """
    if state.phi is None or state.remaining is None:
        raise ConfigurationError("regularized rule needs phi and remaining set")
    values = item.values * scale
    levels = state.u + state.remaining / state.phi
    if mode == "atomic":
        f = np.zeros(state.n)
        pos = np.nonzero(values > 0)[0]
        if pos.size:
            winner = pos[int(np.argmin(levels[pos]))]
            f[winner] = 1.0
            state.u[winner] += values[winner]
    elif mode == "waterfill":
        f = _egalitarian_waterfill(levels, values)
        state.u += values * f
    else:
        raise ConfigurationError(f"unknown granularity {mode!r}")
    if decrement_remaining:
        state.remaining = np.maximum(0.0, state.remaining - item.values)
    return StepOutcome(fractions=f * scale if scale != 1.0 else f)


def allocate_mixed(state: AllocatorState, item: Item, mode: str = "waterfill",
                   scale: float = 1.0) -> StepOutcome:
    """Mixed Greedy: a 50/50 supply split between the Nashian rule and the
    regularized egalitarian rule; remaining decremented once."""
    if mode == "atomic":
        nash = allocate_nashian_atomic(state, item, scale=scale * 0.5)
    else:
        nash = allocate_nashian_waterfill(state, item, scale=scale * 0.5)
    egal = allocate_egalitarian_regularized(
        state, item, mode=mode, scale=scale * 0.5, decrement_remaining=False
    )
    state.remaining = np.maximum(0.0, state.remaining - item.values)
    return StepOutcome(fractions=nash.fractions + egal.fractions)


def allocate_pd_greedy(state: AllocatorState, item: Item, mode: str = "waterfill",
                       scale: float = 1.0) -> StepOutcome:
    """Primal-dual greedy: priority v_a * gamma_a^{-(1-p)}, gamma_a = u_a / p.

    Atomic mode gives the whole item to the max-priority agent (zero gamma
    counts as infinite priority; ties by larger value then lower index) and
    records the winning priority as the item's dual price, recomputed with
    post-allocation gamma when the formal priority was infinite.  Waterfill
    mode runs the exact continuous rule and records the integral of the
    running priority.  p = 1 degenerates to utilitarian greedy.
    """
    if state.p is None or not state.p.is_finite or not (0 < state.p.p <= 1):
        raise ConfigurationError("pd_greedy requires finite p in (0, 1]")
    p = state.p.p
    values = item.values * scale
    f = np.zeros(state.n)
    pos = np.nonzero(values > 0)[0]
    if pos.size == 0:
        state.alphas.append(0.0)
        return StepOutcome(fractions=f, alpha=0.0)

    if p == 1.0 or mode == "atomic":
        if p == 1.0:
            pri = values[pos]
        else:
            g = state.gammas[pos]
            with np.errstate(divide="ignore"):
                pri = np.where(g > 0, values[pos] * g ** -(1.0 - p), np.inf)
        best = pri.max()
        tied = pos[pri == best]
        if np.isinf(best):
            winner = tied[int(np.argmax(values[tied]))]  # larger value first
        else:
            winner = tied[0]
        f[winner] = 1.0
        state.u[winner] += values[winner]
        state.gammas[winner] = state.u[winner] / p
        if np.isinf(best):
            alpha = values[winner] * state.gammas[winner] ** -(1.0 - p)
        else:
            alpha = float(best)
    else:
        frac, alpha = _pd_waterfill(state.u, state.gammas, values, p)
        f = frac
        state.u += values * f
        state.gammas = state.u / p
    state.alphas.append(float(alpha))
    out_f = f * scale if scale != 1.0 else f
    return StepOutcome(fractions=out_f, alpha=float(alpha))


def regularized_gamma(u, n: int):
    """gamma(U) = U * (1 + log(1 + 1/n) - log U), the regularized dual map."""
    u = np.asarray(u, dtype=float)
    return u * (1.0 + np.log(1.0 + 1.0 / n) - np.log(u))


def allocate_regularized_pd(state: AllocatorState, item: Item,
                            scale: float = 1.0) -> StepOutcome:
    """Regularized primal-dual greedy with gamma = gamma(U) (atomic)."""
    if state.p is None or not state.p.is_finite or not (0 < state.p.p <= 1):
        raise ConfigurationError("reg_pd requires finite p in (0, 1]")
    p = state.p.p
    values = item.values * scale
    f = np.zeros(state.n)
    pos = np.nonzero(values > 0)[0]
    if pos.size == 0:
        state.alphas.append(0.0)
        return StepOutcome(fractions=f, alpha=0.0)
    pri = values[pos] * state.gammas[pos] ** -(1.0 - p)
    winner = pos[int(np.argmax(pri))]
    alpha = float(pri.max())
    f[winner] = 1.0
    state.u[winner] += values[winner]
    state.gammas[winner] = float(regularized_gamma(state.u[winner], state.n))
    state.alphas.append(alpha)
    out_f = f * scale if scale != 1.0 else f
    return StepOutcome(fractions=out_f, alpha=alpha)


# ---------------------------------------------------------------------------
# Allocator objects
# ---------------------------------------------------------------------------


class Allocator:
    """Interface: ``start`` builds fresh state, ``step`` allocates one item.

    ``step``'s ``scale`` shrinks the supply this allocator may use while
    bookkeeping (``remaining``) still tracks the full item; the composer
    below relies on that.
    """

    id: str = "?"
    tracks_remaining = False

    def start(self, n: int, monopolist: np.ndarray, base: str) -> AllocatorState:
        raise NotImplementedError

    def step(self, state: AllocatorState, item: Item, scale: float = 1.0) -> StepOutcome:
        raise NotImplementedError

    def base_credit(self, n: int, monopolist: np.ndarray, base: str) -> np.ndarray:
        """The assumed (not physically allocated) base included in state.u."""
        return monopolist / n if base == "relaxed" else np.zeros(n)


class UniformAllocator(Allocator):
    id = "uniform"

    def start(self, n, monopolist, base):
        return AllocatorState(n=n, u=np.zeros(n))

    def step(self, state, item, scale=1.0):
        out = allocate_uniform(state.n)
        f = out.fractions * scale
        state.u += item.values * f
        return StepOutcome(fractions=f)

    def base_credit(self, n, monopolist, base):
        return np.zeros(n)


class NashianGreedy(Allocator):
    def __init__(self, granularity: str = "waterfill"):
        if granularity not in ("atomic", "waterfill"):
            raise ConfigurationError(f"unknown granularity {granularity!r}")
        self.granularity = granularity
        self.id = "nashian"

    def start(self, n, monopolist, base):
        u0 = monopolist / n if base == "relaxed" else np.zeros(n)
        return AllocatorState(n=n, u=u0.astype(float).copy())

    def step(self, state, item, scale=1.0):
        if self.granularity == "atomic":
            return allocate_nashian_atomic(state, item, scale=scale)
        return allocate_nashian_waterfill(state, item, scale=scale)


class MixedGreedy(Allocator):
    tracks_remaining = True

    def __init__(self, granularity: str = "waterfill"):
        if granularity not in ("atomic", "waterfill"):
            raise ConfigurationError(f"unknown granularity {granularity!r}")
        self.granularity = granularity
        self.id = "mixed"

    def start(self, n, monopolist, base):
        u0 = monopolist / n if base == "relaxed" else np.zeros(n)
        return AllocatorState(
            n=n,
            u=u0.astype(float).copy(),
            remaining=monopolist.astype(float).copy(),
            phi=regularizer_scale(n),
        )

    def step(self, state, item, scale=1.0):
        return allocate_mixed(state, item, mode=self.granularity, scale=scale)


class PDGreedy(Allocator):
    def __init__(self, p: PMeanParam, granularity: str = "waterfill"):
        if granularity not in ("atomic", "waterfill"):
            raise ConfigurationError(f"unknown granularity {granularity!r}")
        if not p.is_finite or not (0 < p.p <= 1):
            raise ConfigurationError("pd_greedy requires finite p in (0, 1]")
        self.p = p
        self.granularity = granularity
        self.id = "pd_greedy"

    def start(self, n, monopolist, base):
        # The primal-dual greedy starts from zero utility and zero duals
        # regardless of the relaxation mode.
        return AllocatorState(n=n, u=np.zeros(n), gammas=np.zeros(n), p=self.p)

    def step(self, state, item, scale=1.0):
        return allocate_pd_greedy(state, item, mode=self.granularity, scale=scale)

    def base_credit(self, n, monopolist, base):
        return np.zeros(n)


class RegularizedPDGreedy(Allocator):
    def __init__(self, p: PMeanParam):
        if not p.is_finite or not (0 < p.p <= 1):
            raise ConfigurationError("reg_pd requires finite p in (0, 1]")
        self.p = p
        self.id = "reg_pd"

    def start(self, n, monopolist, base):
        u0 = monopolist / n
        gam = regularized_gamma(u0, n)
        return AllocatorState(n=n, u=u0.astype(float).copy(), gammas=gam, p=self.p)

    def step(self, state, item, scale=1.0):
        return allocate_regularized_pd(state, item, scale=scale)

    def base_credit(self, n, monopolist, base):
        # The 1/n (V_a/n) start is part of the algorithm's accounting.
        return monopolist / n


class UniformMix(Allocator):
    """uniform_share of every item uniformly; the rest to the inner rule.

    The inner rule runs with zero assumed base: the relaxed 1/n credit is
    realized physically by the uniform share.  The uniform part of each
    item lands before the inner rule sees its share, so every agent that
    values an item has positive utility by the time the inner rule runs.
    """

    def __init__(self, inner: Allocator, uniform_share: float = 0.5):
        if not (0.0 <= uniform_share <= 1.0):
            raise ConfigurationError("uniform_share must lie in [0, 1]")
        self.inner = inner
        self.share = float(uniform_share)
        self.id = f"uniform+{inner.id}"
        self.tracks_remaining = inner.tracks_remaining

    def start(self, n, monopolist, base):
        return self.inner.start(n, monopolist, "physical")

    def step(self, state, item, scale=1.0):
        f_uni = np.full(state.n, scale * self.share / state.n)
        state.u += item.values * f_uni
        inner_out = self.inner.step(state, item, scale=scale * (1.0 - self.share))
        return StepOutcome(fractions=f_uni + inner_out.fractions,
                           alpha=inner_out.alpha)

    def base_credit(self, n, monopolist, base):
        return np.zeros(n)


def compose_with_uniform(inner: Allocator, uniform_share: float = 0.5) -> Allocator:
    """Allocator that mixes ``inner`` with Uniform Allocation."""
    if uniform_share == 0.0:
        return inner
    return UniformMix(inner, uniform_share)


def make_allocator(algo: str, p: PMeanParam | None = None,
                   granularity: str = "waterfill") -> Allocator:
    """Build an allocator from its CLI string id."""
    if algo == "uniform":
        return UniformAllocator()
    if algo == "nashian":
        return NashianGreedy(granularity)
    if algo == "mixed":
        return MixedGreedy(granularity)
    if algo == "pd_greedy":
        if p is None:
            raise ConfigurationError("pd_greedy requires --p")
        return PDGreedy(p, granularity)
    if algo == "reg_pd":
        if p is None:
            raise ConfigurationError("reg_pd requires --p")
        return RegularizedPDGreedy(p)
    raise ConfigurationError(f"unknown algorithm id {algo!r}")


# ---------------------------------------------------------------------------
# Driving a run
# ---------------------------------------------------------------------------


def run_online(allocator: Allocator, inst: Instance, base: str = "relaxed",
               allow_invalid: bool = False) -> RunTrace:
    """Feed the instance's items through the allocator in arrival order."""
    if base not in ("relaxed", "physical"):
        raise ConfigurationError(f"unknown base mode {base!r}")
    if not allow_invalid:
        report = validate_instance(inst, tol=1e-6)
        if not report.passed:
            raise InvalidInputError(
                f"instance fails validation (agents {report.failing_agents()}); "
                "pass allow_invalid to run anyway"
            )
    V = inst.monopolist
    state = allocator.start(inst.n, V, base)
    u_before = np.empty((inst.m, inst.n))
    rem_before = np.empty((inst.m, inst.n)) if state.remaining is not None else None
    x = np.zeros((inst.n, inst.m))
    for i, item in enumerate(inst.items):
        u_before[i] = state.u
        if rem_before is not None:
            rem_before[i] = state.remaining
        out = allocator.step(state, item)
        x[:, i] = out.fractions
    base_credit = allocator.base_credit(inst.n, V, base)
    return RunTrace(
        instance=inst,
        allocation=Allocation(x),
        state=state,
        u_before=u_before,
        remaining_before=rem_before,
        base=base_credit,
    )
