"""Small numerical kernels used across modules."""
import math

import numpy as np


def logsumexp(a):
    """Return ``log(sum(exp(a)))`` with a max shift, plus the normalized weights.

    Sums go through ``np.sum`` (pairwise), so results are reproducible for a
    fixed input order.
    """
    a = np.asarray(a, dtype=float)
    shift = np.max(a)
    w = np.exp(a - shift)
    total = np.sum(w)
    return shift + math.log(total), w / total


def bisect(fn, lo, hi, xtol, max_iter=200):
    """Bisection for an increasing ``fn`` with ``fn(lo) < 0 < fn(hi)``.

    Returns the final bracket ``(lo, hi)``.
    """
    for _ in range(max_iter):
        if hi - lo <= xtol:
            break
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if fn(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return lo, hi


def rel_close(a, b, rtol):
    return abs(a - b) <= rtol * max(1.0, abs(a), abs(b))
