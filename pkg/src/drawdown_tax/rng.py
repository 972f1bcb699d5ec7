"""Philox4x32-10 counter-based generator.

Each random block is a pure function of (counter, key), so any path can be
regenerated on its own and the results do not depend on how paths are
distributed over threads.
"""

import numpy as np
from numba import njit

MASK = np.uint64(0xFFFFFFFF)
M0 = np.uint64(0xD2511F53)
M1 = np.uint64(0xCD9E8D57)
W0 = np.uint64(0x9E3779B9)
W1 = np.uint64(0xBB67AE85)
SHIFT = np.uint64(32)
TO_UNIT = 2.0 ** -32


@njit(cache=True)
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten Philox rounds on a 4x32-bit counter with a 2x32-bit key (all uint64 holders)."""
    for _ in range(10):
        p0 = M0 * c0
        p1 = M1 * c2
        c0, c1, c2, c3 = (
            ((p1 >> SHIFT) ^ c1 ^ k0) & MASK,
            p1 & MASK,
            ((p0 >> SHIFT) ^ c3 ^ k1) & MASK,
            p0 & MASK,
        )
        k0 = (k0 + W0) & MASK
        k1 = (k1 + W1) & MASK
    return c0, c1, c2, c3


@njit(cache=True)
def uniforms4(step, path, seed):
    """Four uniforms in (0, 1) for block ``step`` of stream ``path``."""
    s = np.uint64(seed)
    st = np.uint64(step)
    pa = np.uint64(path)
    r0, r1, r2, r3 = philox4x32(st & MASK, st >> SHIFT, pa & MASK, pa >> SHIFT,
                                s & MASK, s >> SHIFT)
    return ((np.float64(r0) + 0.5) * TO_UNIT, (np.float64(r1) + 0.5) * TO_UNIT,
            (np.float64(r2) + 0.5) * TO_UNIT, (np.float64(r3) + 0.5) * TO_UNIT)
