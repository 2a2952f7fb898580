"""Data model and the p-mean welfare functional.

Agents have additive utilities over divisible items.  Each discrete item
is the unit time interval of a constant-rate stream; only the total value
vector matters to any operation in this package, so items carry just that.

The welfare of a utility vector ``u`` is the generalized mean

    W_p(u) = ((1/n) * sum_a u_a^p) ** (1/p)

extended to the tagged special cases ``p = 0`` (geometric mean / Nash
welfare) and ``p = -inf`` (minimum / egalitarian welfare).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

# Numeric p values closer to zero than this collapse to the Nash branch.
NASH_EPSILON = 1e-9

# Default tolerance for monopolist-sum validation.
VALIDATION_TOL = 1e-6


class InvalidInputError(ValueError):
    """Raised when an operation receives structurally invalid input."""


class PreconditionError(RuntimeError):
    """Raised when an algorithmic precondition is violated at run time."""


class ConfigurationError(ValueError):
    """Raised when an algorithm or generator is misconfigured."""


# ---------------------------------------------------------------------------
# p parameter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PMeanParam:
    """The exponent of the p-mean, tagged for the special cases.

    ``tag`` is one of ``"finite"`` (with ``p`` a nonzero real <= 1),
    ``"nash"`` (the p -> 0 limit) or ``"neg_infinity"`` (the minimum).
    """

    tag: str
    p: float | None = None

    def __post_init__(self):
        if self.tag not in ("finite", "nash", "neg_infinity"):
            raise InvalidInputError(f"unknown p-mean tag {self.tag!r}")
        if self.tag == "finite":
            if self.p is None or not np.isfinite(self.p):
                raise InvalidInputError("finite tag requires a finite p")
            if self.p > 1:
                raise InvalidInputError(f"p must be <= 1, got {self.p}")
            if abs(self.p) < NASH_EPSILON:
                raise InvalidInputError(
                    "finite p too close to 0; construct via PMeanParam.of() "
                    "to normalize to the nash branch"
                )
        elif self.p is not None:
            raise InvalidInputError(f"tag {self.tag!r} carries no numeric p")

    @classmethod
    def of(cls, p: float) -> "PMeanParam":
        """Build from a number, normalizing |p| < 1e-9 to nash and -inf."""
        if p == -np.inf:
            return cls("neg_infinity")
        if abs(p) < NASH_EPSILON:
            return cls("nash")
        return cls("finite", float(p))

    @classmethod
    def parse(cls, text: str) -> "PMeanParam":
        """Parse a CLI-style string: a float, "nash", or "-inf"."""
        t = text.strip().lower()
        if t == "nash":
            return cls("nash")
        if t in ("-inf", "-infinity", "neg_infinity"):
            return cls("neg_infinity")
        try:
            return cls.of(float(t))
        except ValueError as exc:
            raise InvalidInputError(f"cannot parse p value {text!r}") from exc

    @property
    def is_finite(self) -> bool:
        return self.tag == "finite"

    @property
    def abs_p(self) -> float:
        """|p|, with nash -> 0 and neg_infinity -> inf."""
        if self.tag == "nash":
            return 0.0
        if self.tag == "neg_infinity":
            return np.inf
        return abs(self.p)

    def __str__(self) -> str:
        if self.tag == "finite":
            return repr(self.p)
        return "nash" if self.tag == "nash" else "-inf"


# ---------------------------------------------------------------------------
# Instances and allocations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Item:
    """One divisible item: values[a] is agent a's utility for the whole item."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise InvalidInputError("item values must be a 1-d vector")
        if not np.all(np.isfinite(v)):
            raise InvalidInputError("item values must be finite")
        if np.any(v < 0):
            raise InvalidInputError("item values must be non-negative")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Instance:
    """An ordered sequence of items over n agents.

    ``predicted_monopolist`` holds the V_a predictions (default all ones);
    a valid instance has each agent's values summing to V_a.
    """

    n: int
    items: tuple[Item, ...]
    predicted_monopolist: np.ndarray | None = None

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError("need at least one agent")
        items = tuple(self.items)
        for it in items:
            if len(it.values) != self.n:
                raise InvalidInputError("item dimension does not match n")
        object.__setattr__(self, "items", items)
        if self.predicted_monopolist is not None:
            V = np.asarray(self.predicted_monopolist, dtype=float)
            if V.shape != (self.n,):
                raise InvalidInputError("predicted_monopolist length must be n")
            if np.any(V <= 0) or not np.all(np.isfinite(V)):
                raise InvalidInputError("V_a must be positive and finite")
            object.__setattr__(self, "predicted_monopolist", V)

    @property
    def m(self) -> int:
        return len(self.items)

    @property
    def monopolist(self) -> np.ndarray:
        """V_a vector (ones when no prediction supplied)."""
        if self.predicted_monopolist is None:
            return np.ones(self.n)
        return self.predicted_monopolist

    def value_matrix(self) -> np.ndarray:
        """The n x m matrix of item values."""
        if self.m == 0:
            return np.zeros((self.n, 0))
        return np.column_stack([it.values for it in self.items])


@dataclass(frozen=True)
class Allocation:
    """Fractional assignment x[a, i] of item i to agent a."""

    x: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2:
            raise InvalidInputError("allocation must be an n x m matrix")
        if np.any(x < -1e-12) or not np.all(np.isfinite(x)):
            raise InvalidInputError("allocation entries must be >= 0 and finite")
        # summing n fractions accumulates O(n * eps) rounding error
        col_tol = 1e-12 * max(1.0, x.shape[0])
        if x.shape[1] and np.any(x.sum(axis=0) > 1 + col_tol):
            raise InvalidInputError("allocation column sums exceed 1")
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]


# ---------------------------------------------------------------------------
# Welfare
# ---------------------------------------------------------------------------


def p_mean_welfare(u, p: PMeanParam) -> float:
    """The p-mean welfare of a utility vector.

    Zero utilities give welfare 0 for p <= 0 (limit convention).  Negative
    p is computed with log-sum-exp to stay stable for small utilities and
    large |p|.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size == 0:
        raise InvalidInputError("utility vector must be non-empty and 1-d")
    if np.any(u < 0) or not np.all(np.isfinite(u)):
        raise InvalidInputError("utilities must be non-negative and finite")
    n = u.size
    if p.tag == "neg_infinity":
        return float(u.min())
    if p.tag == "nash":
        if np.any(u == 0):
            return 0.0
        return float(np.exp(np.mean(np.log(u))))
    pv = p.p
    if pv > 0:
        return float(np.mean(u**pv) ** (1.0 / pv))
    if np.any(u == 0):
        return 0.0
    return float(np.exp((logsumexp(pv * np.log(u)) - np.log(n)) / pv))


def utilities_of(inst: Instance, x, base_per_agent=None) -> np.ndarray:
    """Per-agent utilities of an allocation plus a base credit.

    ``base_per_agent`` is zero for unrelaxed accounting and V_a/n for the
    relaxed accounting.
    """
    xm = x.x if isinstance(x, Allocation) else np.asarray(x, dtype=float)
    if xm.shape != (inst.n, inst.m):
        raise InvalidInputError(
            f"allocation shape {xm.shape} does not match instance "
            f"({inst.n}, {inst.m})"
        )
    if base_per_agent is None:
        base = np.zeros(inst.n)
    else:
        base = np.asarray(base_per_agent, dtype=float)
        if base.shape != (inst.n,):
            raise InvalidInputError("base vector length must be n")
        if np.any(base < 0):
            raise InvalidInputError("base utilities must be non-negative")
    if inst.m == 0:
        return base.copy()
    return base + np.einsum("ai,ai->a", inst.value_matrix(), xm)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    """Per-agent monopolist-sum deficits and the realized prediction ratio K."""

    passed: bool
    deficits: np.ndarray
    realized_K: float
    tol: float

    def failing_agents(self) -> list[int]:
        return [int(a) for a in np.nonzero(self.deficits > self.tol)[0]]


def validate_instance(inst: Instance, tol: float = VALIDATION_TOL) -> ValidationReport:
    """Check that each agent's values sum to its monopolist utility V_a."""
    V = inst.monopolist
    sums = inst.value_matrix().sum(axis=1) if inst.m else np.zeros(inst.n)
    deficits = np.abs(sums - V)
    realized_K = float(V.max() / V.min())
    passed = bool(np.all(deficits <= tol))
    return ValidationReport(passed=passed, deficits=deficits, realized_K=realized_K, tol=tol)


# ---------------------------------------------------------------------------
# Interchange formats
# ---------------------------------------------------------------------------


def instance_to_json(inst: Instance) -> str:
    V = inst.predicted_monopolist
    payload = {
        "n": inst.n,
        "predicted_monopolist": None if V is None else [float(v) for v in V],
        "items": [{"values": [float(v) for v in it.values]} for it in inst.items],
    }
    return json.dumps(payload)


def instance_from_json(text: str) -> Instance:
    try:
        payload = json.loads(text)
        items = tuple(Item(np.asarray(it["values"], dtype=float)) for it in payload["items"])
        V = payload.get("predicted_monopolist")
        return Instance(
            n=int(payload["n"]),
            items=items,
            predicted_monopolist=None if V is None else np.asarray(V, dtype=float),
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"malformed instance JSON: {exc}") from exc


def load_instance(path) -> Instance:
    with open(path) as fh:
        return instance_from_json(fh.read())


def save_instance(inst: Instance, path) -> None:
    with open(path, "w") as fh:
        fh.write(instance_to_json(inst))


def allocation_to_csv(alloc: Allocation) -> str:
    lines = ["item,agent,fraction"]
    x = alloc.x
    items, agents = np.nonzero(x.T)  # transpose so rows group by item
    for i, a in zip(items, agents):
        lines.append(f"{i},{a},{float(x[a, i])!r}")
    return "\n".join(lines) + "\n"


def allocation_from_csv(text: str, n: int, m: int) -> Allocation:
    x = np.zeros((n, m))
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "item,agent,fraction":
        raise InvalidInputError("allocation CSV must start with 'item,agent,fraction'")
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 3:
            raise InvalidInputError(f"malformed allocation row {ln!r}")
        i, a, f = int(parts[0]), int(parts[1]), float(parts[2])
        if not (0 <= a < n and 0 <= i < m):
            raise InvalidInputError(f"allocation row out of range: {ln!r}")
        x[a, i] = f
    return Allocation(x)


def save_allocation(alloc: Allocation, path) -> None:
    with open(path, "w") as fh:
        fh.write(allocation_to_csv(alloc))


def load_allocation(path, n: int, m: int) -> Allocation:
    with open(path) as fh:
        return allocation_from_csv(fh.read(), n, m)
