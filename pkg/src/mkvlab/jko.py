"""Minimizing-movement (JKO) steps in Lagrangian quantile coordinates.

A measure is represented by K ordered particles x_0 < ... < x_{K-1}, the
values of its quantile function at the levels (k + 1/2) / K. Between
neighbours the density is (1/K) / (x_{k+1} - x_k), so in these coordinates

    K * [F(nu) + W2(nu, mu)^2 / (2 tau)]
        = -sum log(x_{k+1} - x_k) + sum Psi(x_k) - (J K / 2) mean(x)^2
          + sum (x_k - y_k)^2 / (2 tau) + const,

with y the particles of mu. The Hessian is tridiagonal minus a rank-one
interaction term, so each Newton step costs O(K).
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from .measure import GridMeasure, quantile_function

GRAD_TOL = 1e-8
MAX_ITER = 10_000


class JKOConvergenceError(RuntimeError):
    pass


def quantile_levels(k):
    return (np.arange(k) + 0.5) / k


def particles_from_measure(mu, k):
    return quantile_function(mu, quantile_levels(k))


def measure_from_particles(grid, x):
    """Cell masses of the piecewise-linear CDF through (x_k, (k + 1/2)/K).

    The CDF reaches 0 and 1 half a gap beyond the outermost particles.
    """
    x = np.asarray(x, dtype=float)
    k = x.size
    xs = np.concatenate([[x[0] - 0.5 * (x[1] - x[0])], x, [x[-1] + 0.5 * (x[-1] - x[-2])]])
    levels = np.concatenate([[0.0], quantile_levels(k), [1.0]])
    cdf = np.interp(grid.edges, xs, levels, left=0.0, right=1.0)
    cdf[0], cdf[-1] = 0.0, 1.0
    p = np.maximum(np.diff(cdf), 0.0)
    return GridMeasure.from_weights(grid, p)


def _objective(spec, x, y, tau):
    d = np.diff(x)
    if np.any(d <= 0):
        return np.inf
    m = np.mean(x)
    return float(
        -np.sum(np.log(d)) + np.sum(spec.psi(x)) - 0.5 * spec.j * x.size * m * m
        + np.sum((x - y) ** 2) / (2.0 * tau)
    )


def _gradient(spec, x, y, tau):
    inv = 1.0 / np.diff(x)
    g = spec.dpsi(x) - spec.j * np.mean(x) + (x - y) / tau
    g[:-1] += inv
    g[1:] -= inv
    return g


def _rms(g):
    return float(np.sqrt(np.mean(g * g)))


def _newton_direction(spec, x, g, tau):
    k = x.size
    inv2 = 1.0 / np.diff(x) ** 2
    diag = spec.ddpsi(x) + 1.0 / tau
    diag[:-1] += inv2
    diag[1:] += inv2
    ab = np.zeros((2, k))
    ab[0, 1:] = -inv2
    ab[1] = diag
    rhs = np.column_stack([-g, np.ones(k)])
    try:
        sol = linalg.solveh_banded(ab, rhs, check_finite=False)
    except linalg.LinAlgError:
        return -g
    u, v = sol[:, 0], sol[:, 1]
    c = spec.j / k
    denom = 1.0 - c * np.sum(v)
    if not denom > 0:
        return -g
    return u + v * (c * np.sum(u) / denom)


def jko_particle_step(spec, y, tau, tol=GRAD_TOL, max_iter=MAX_ITER):
    """Minimise the JKO objective over ordered particles starting from ``y``.

    Damped Newton with Armijo backtracking; trial points that break the
    ordering are rejected by the line search. Converged when the RMS of the
    per-particle gradient is at most ``tol``.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    y = np.asarray(y, dtype=float)
    x = y.copy()
    f = _objective(spec, x, y, tau)
    for it in range(max_iter):
        g = _gradient(spec, x, y, tau)
        res = _rms(g)
        if res <= tol:
            return x, it
        p = _newton_direction(spec, x, g, tau)
        slope = float(g @ p)
        if slope >= 0:
            p = -g
            slope = -float(g @ g)
        # near the minimiser the predicted decrease drops below the rounding
        # level of f; there a step is also accepted if it reduces the gradient
        noise = 64 * np.finfo(float).eps * (abs(f) + 1.0)
        a = 1.0
        while a > 1e-20:
            xt = x + a * p
            ft = _objective(spec, xt, y, tau)
            if ft <= f + 1e-4 * a * slope:
                break
            if ft <= f + noise and _rms(_gradient(spec, xt, y, tau)) < res:
                break
            a *= 0.5
        else:
            raise JKOConvergenceError(f"line search stalled at gradient RMS {res:.3g}")
        if ft >= f and np.array_equal(xt, x):
            raise JKOConvergenceError(f"no progress at gradient RMS {res:.3g}")
        x, f = xt, ft
    raise JKOConvergenceError(f"no convergence in {max_iter} iterations")


def jko_step(spec, mu, tau, n_particles=None):
    """Approximate argmin of F(nu) + W2(nu, mu)^2 / (2 tau), returned on mu's grid."""
    k = n_particles or 2 * mu.grid.n
    x, _ = jko_particle_step(spec, particles_from_measure(mu, k), tau)
    return measure_from_particles(mu.grid, x)


def jko_flow(spec, mu0, tau, t_end, n_particles=1000):
    """Iterate minimizing movements in particle coordinates up to ``t_end``.

    Returns the particle vectors at times 0, tau, 2 tau, ...
    """
    n = int(round(t_end / tau))
    if abs(n * tau - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be a multiple of tau")
    x = particles_from_measure(mu0, n_particles)
    path = [x]
    for _ in range(n):
        x, _ = jko_particle_step(spec, x, tau)
        path.append(x)
    return path


def quantile_gap(mu, x):
    """L2 distance between the particle quantiles ``x`` and those of ``mu``."""
    q = particles_from_measure(mu, np.asarray(x).size)
    return float(np.sqrt(np.mean((np.asarray(x) - q) ** 2)))
