"""Mirror-exact reductions on arrays laid out symmetrically about the origin.

Arrays indexed by a symmetric 1-D grid pair entry ``i`` with entry ``n-1-i``.
Summing those pairs first (from the centre outwards) makes the reduction
bit-identical for an array and its reversal, so reflected measures produce
exactly reflected statistics.
"""

import numpy as np


def mirror_sum(a):
    """Sum of ``a`` that is invariant (bit-for-bit) under ``a[::-1]``."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n % 2:
        h = n // 2
        return float(np.sum(a[:h][::-1] + a[h + 1:]) + a[h])
    h = n // 2
    return float(np.sum(a[:h][::-1] + a[h:]))


def mirror_odd_dot(x, w):
    """``sum(x * w)`` for odd ``x`` (``x[::-1] == -x``), exactly negated under ``w[::-1]``.

    Only the upper half of ``x`` is read.
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    n = x.shape[0]
    h = n // 2
    upper = slice(n - h, n)
    return float(np.sum(x[upper] * (w[upper] - w[:h][::-1])))


def symmetric_nodes(half_width, n_cells):
    """Cell edges of a uniform grid on [-L, L] that are exact negatives of each other."""
    if n_cells % 2:
        raise ValueError("n_cells must be even")
    k = n_cells // 2
    pos = half_width * (np.arange(k + 1) / k)
    return np.concatenate([-pos[::-1], pos[1:]])


def symmetric_centers(half_width, n_cells):
    if n_cells % 2:
        raise ValueError("n_cells must be even")
    k = n_cells // 2
    pos = half_width * ((np.arange(k) + 0.5) / k)
    return np.concatenate([-pos[::-1], pos])


def trapezoid_weights(n_nodes, h):
    w = np.full(n_nodes, h)
    w[0] = w[-1] = 0.5 * h
    return w
