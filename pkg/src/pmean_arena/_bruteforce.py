"""Grid-enumeration kernels behind ``brute_force_opt``.

Compiled with numba: the 0.02-grid over three items and three agents has
roughly 2e9 allocation triples, far beyond pure-python reach.  Each kernel
maximizes a monotone transform of the welfare (product for nash, signed
power sum for finite p, minimum for p = -inf) over every combination of
per-item grid splits; the caller inverts the transform.

All kernels assume exactly three agents; the caller pads smaller instances
with a phantom agent of constant utility, which shifts every score by the
same constant and so never changes the argmax (see ``brute_force_opt``).
The inner loops are branch-free so they vectorize; a zero utility under
negative p becomes an infinite power sum, which loses the max naturally.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_JIT = dict(cache=True, fastmath=True, error_model="numpy")


@njit(**_JIT)
def _kernel_product(a1, b1, c1, a2, b2, c2, a3, b3, c3):
    best = -np.inf
    for i1 in range(a1.size):
        for i2 in range(a2.size):
            x = a1[i1] + a2[i2]
            y = b1[i1] + b2[i2]
            z = c1[i1] + c2[i2]
            for i3 in range(a3.size):
                s = (x + a3[i3]) * (y + b3[i3]) * (z + c3[i3])
                if s > best:
                    best = s
    return best


@njit(**_JIT)
def _kernel_min(a1, b1, c1, a2, b2, c2, a3, b3, c3):
    best = -np.inf
    for i1 in range(a1.size):
        for i2 in range(a2.size):
            x = a1[i1] + a2[i2]
            y = b1[i1] + b2[i2]
            z = c1[i1] + c2[i2]
            for i3 in range(a3.size):
                s = min(x + a3[i3], y + b3[i3], z + c3[i3])
                if s > best:
                    best = s
    return best


@njit(**_JIT)
def _kernel_sum(a1, b1, c1, a2, b2, c2, a3, b3, c3):
    best = -np.inf
    for i1 in range(a1.size):
        for i2 in range(a2.size):
            x = a1[i1] + a2[i2]
            y = b1[i1] + b2[i2]
            z = c1[i1] + c2[i2]
            for i3 in range(a3.size):
                s = (x + a3[i3]) + (y + b3[i3]) + (z + c3[i3])
                if s > best:
                    best = s
    return best


@njit(**_JIT)
def _kernel_inv(a1, b1, c1, a2, b2, c2, a3, b3, c3):
    # p = -1: maximize -(sum 1/u)
    best = -np.inf
    for i1 in range(a1.size):
        for i2 in range(a2.size):
            x = a1[i1] + a2[i2]
            y = b1[i1] + b2[i2]
            z = c1[i1] + c2[i2]
            for i3 in range(a3.size):
                s = -(1.0 / (x + a3[i3]) + 1.0 / (y + b3[i3]) + 1.0 / (z + c3[i3]))
                if s > best:
                    best = s
    return best


@njit(**_JIT)
def _kernel_invsq(a1, b1, c1, a2, b2, c2, a3, b3, c3):
    # p = -2: maximize -(sum 1/u^2)
    best = -np.inf
    for i1 in range(a1.size):
        for i2 in range(a2.size):
            x = a1[i1] + a2[i2]
            y = b1[i1] + b2[i2]
            z = c1[i1] + c2[i2]
            for i3 in range(a3.size):
                u = x + a3[i3]
                v = y + b3[i3]
                w = z + c3[i3]
                s = -(1.0 / (u * u) + 1.0 / (v * v) + 1.0 / (w * w))
                if s > best:
                    best = s
    return best


@njit(**_JIT)
def _kernel_sqrt(a1, b1, c1, a2, b2, c2, a3, b3, c3):
    # p = 0.5: maximize sum sqrt(u)
    best = -np.inf
    for i1 in range(a1.size):
        for i2 in range(a2.size):
            x = a1[i1] + a2[i2]
            y = b1[i1] + b2[i2]
            z = c1[i1] + c2[i2]
            for i3 in range(a3.size):
                s = np.sqrt(x + a3[i3]) + np.sqrt(y + b3[i3]) + np.sqrt(z + c3[i3])
                if s > best:
                    best = s
    return best


@njit(**_JIT)
def _kernel_pow(a1, b1, c1, a2, b2, c2, a3, b3, c3, pv):
    # generic finite p: maximize sign(p) * sum u^p
    sign = 1.0 if pv > 0 else -1.0
    best = -np.inf
    for i1 in range(a1.size):
        for i2 in range(a2.size):
            x = a1[i1] + a2[i2]
            y = b1[i1] + b2[i2]
            z = c1[i1] + c2[i2]
            for i3 in range(a3.size):
                s = sign * ((x + a3[i3]) ** pv + (y + b3[i3]) ** pv
                            + (z + c3[i3]) ** pv)
                if s > best:
                    best = s
    return best


def max_transformed_welfare(contribs, code: int, pv: float) -> float:
    """Dispatch to the matching kernel.

    ``contribs`` is a list of three (splits, 3) arrays of per-split agent
    utilities; ``code`` 0 = product, 1 = signed power sum, 2 = minimum.
    """
    cols = []
    for c in contribs:
        c = np.ascontiguousarray(c, dtype=np.float64)
        cols.extend([c[:, 0].copy(), c[:, 1].copy(), c[:, 2].copy()])
    if code == 0:
        return float(_kernel_product(*cols))
    if code == 2:
        return float(_kernel_min(*cols))
    if pv == 1.0:
        return float(_kernel_sum(*cols))
    if pv == -1.0:
        return float(_kernel_inv(*cols))
    if pv == -2.0:
        return float(_kernel_invsq(*cols))
    if pv == 0.5:
        return float(_kernel_sqrt(*cols))
    return float(_kernel_pow(*cols, pv))
