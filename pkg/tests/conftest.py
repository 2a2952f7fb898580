import numpy as np
import pytest

from pmean_arena import Instance, Item, PMeanParam, random_instance, solve_opt

CORPUS_SEED = 1000


def corpus_instance(idx: int, heterogeneous: bool = False) -> Instance:
    """Instance #idx of the shared random test corpus (n in 2..16, m in 1..40)."""
    rng = np.random.default_rng(CORPUS_SEED + idx)
    n = int(rng.integers(2, 17))
    m = int(rng.integers(1, 41))
    monopolist = rng.uniform(0.5, 1.0, n) if heterogeneous else None
    return random_instance(n, m, seed=CORPUS_SEED + 10_000 + idx,
                           dist="uniform", monopolist=monopolist)


def corpus(size: int = 200, heterogeneous: bool = False):
    return [corpus_instance(i, heterogeneous) for i in range(size)]


@pytest.fixture(scope="session")
def opt_cache():
    """Memoized offline solves shared across test modules."""
    cache: dict = {}

    def get(inst: Instance, p: PMeanParam, key):
        k = (key, str(p))
        if k not in cache:
            cache[k] = solve_opt(inst, p)
        return cache[k]

    return get


def identity_instance(n: int = 2) -> Instance:
    items = []
    for i in range(n):
        v = np.zeros(n)
        v[i] = 1.0
        items.append(Item(v))
    return Instance(n, tuple(items))
