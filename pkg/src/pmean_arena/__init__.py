"""Online p-mean welfare maximization with divisible items.

Library layout:

* :mod:`pmean_arena.core` — instances, allocations, the welfare functional;
* :mod:`pmean_arena.allocators` — the online rules (uniform, Nashian
  greedy, Mixed Greedy, the primal-dual greedies) and run driving;
* :mod:`pmean_arena.benchmark` — the offline optimum (Frank-Wolfe) and a
  brute-force oracle;
* :mod:`pmean_arena.certificates` — mechanical per-run guarantees;
* :mod:`pmean_arena.adversaries` — adaptive hard-instance families and
  random instances;
* :mod:`pmean_arena.harness` / :mod:`pmean_arena.cli` — orchestration.
"""

from .core import (
    Allocation,
    ConfigurationError,
    Instance,
    InvalidInputError,
    Item,
    PMeanParam,
    PreconditionError,
    p_mean_welfare,
    utilities_of,
    validate_instance,
)
from .allocators import (
    MixedGreedy,
    NashianGreedy,
    PDGreedy,
    RegularizedPDGreedy,
    UniformAllocator,
    compose_with_uniform,
    make_allocator,
    run_online,
)
from .benchmark import brute_force_opt, opt_utilities, solve_opt
from .adversaries import (
    NegativeAdversaryConfig,
    PositiveAdversaryConfig,
    random_instance,
    run_negative_adversary,
    run_positive_adversary,
    s_sequence,
)
from .harness import execute_run, regime_bound

__all__ = [
    "Allocation",
    "ConfigurationError",
    "Instance",
    "InvalidInputError",
    "Item",
    "MixedGreedy",
    "NashianGreedy",
    "NegativeAdversaryConfig",
    "PDGreedy",
    "PMeanParam",
    "PositiveAdversaryConfig",
    "PreconditionError",
    "RegularizedPDGreedy",
    "UniformAllocator",
    "brute_force_opt",
    "compose_with_uniform",
    "execute_run",
    "make_allocator",
    "opt_utilities",
    "p_mean_welfare",
    "random_instance",
    "regime_bound",
    "run_negative_adversary",
    "run_online",
    "run_positive_adversary",
    "s_sequence",
    "solve_opt",
    "utilities_of",
    "validate_instance",
]

__version__ = "0.1.0"
