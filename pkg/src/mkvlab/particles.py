"""Euler-Maruyama simulation of the N-particle mean-field system

    dx_i = (-Psi'(x_i) + J mean(x)) dt + sqrt(2) dB_i

and its comparison with the grid flow.

Randomness is counter based (Philox): the noise of step k is a pure
function of (seed, k), and the initial sample uses its own counter block, so
results do not depend on how work is scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .flow import advance
from .measure import from_samples, quantile_function, wasserstein2_density

INIT_STREAM = 1


class ParticleError(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    x: np.ndarray
    t: float
    seed: int
    step: int = 0
    antithetic: bool = False

    def __post_init__(self):
        if self.x.ndim != 1 or self.x.size < 2:
            raise ValueError("an ensemble needs at least two particles")
        if not np.all(np.isfinite(self.x)):
            raise ParticleError("non-finite particle position")


def _generator(seed, step, stream=0):
    return np.random.Generator(np.random.Philox(key=int(seed), counter=[0, int(step), int(stream), 0]))


def step_noise(seed, step, n):
    """Standard normals for step ``step``; one counter block per step."""
    return _generator(seed, step).standard_normal(n)


def em_update(spec, x, dt, xi):
    """Deterministic part of a step given the noise vector ``xi``.

    The mean is an exactly rounded sum, so it does not depend on particle order.
    """
    m = math.fsum(x) / x.size
    out = x + (spec.j * m - spec.dpsi(x)) * dt + math.sqrt(2.0 * dt) * xi
    if not np.all(np.isfinite(out)):
        raise ParticleError(f"non-finite position after step with dt={dt}")
    return out


def em_step(spec, ens, dt):
    if not dt > 0:
        raise ValueError("dt must be positive")
    xi = step_noise(ens.seed, ens.step, ens.x.size)
    if ens.antithetic:
        xi = -xi
    x = em_update(spec, ens.x, dt, xi)
    return ParticleEnsemble(x, ens.t + dt, ens.seed, ens.step + 1, ens.antithetic)


def sample_initial(mu, n, seed, antithetic=False):
    """Inverse-CDF sample of ``n`` points from the piecewise-constant density of mu."""
    if n < 2:
        raise ValueError("need at least two particles")
    u = _generator(seed, 0, INIT_STREAM).random(n)
    x = quantile_function(mu, u)
    return -x if antithetic else x


def simulate(spec, mu0, n, dt, t_end, seed, record_times=None, antithetic=False):
    """Ensemble snapshots at ``record_times`` (default: start and end).

    Record times are rounded to the nearest whole number of steps. With
    ``antithetic`` the initial sample is reflected and the noise negated.
    """
    x0 = sample_initial(mu0, n, seed)
    if antithetic:
        x0 = -x0
    ens = ParticleEnsemble(x0, 0.0, int(seed), 0, antithetic)
    times = [0.0, t_end] if record_times is None else list(record_times)
    marks = sorted({int(round(t / dt)) for t in times})
    n_steps = int(round(t_end / dt))
    snaps = []
    for k in range(n_steps + 1):
        if k in marks:
            snaps.append(ens)
        if k < n_steps:
            ens = em_step(spec, ens, dt)
    return snaps


@dataclass(frozen=True)
class GapRow:
    n: int
    median: float
    gaps: tuple


def propagation_gap(spec, mu0, n_list, t_end, dt, seeds, pde_dt=1e-3, threads=1):
    """Median over seeds of W2(empirical histogram at t_end, grid flow at t_end)."""
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be increasing")
    ref = advance(spec, mu0, t_end, pde_dt) if t_end > 0 else mu0

    def one(job):
        n, seed = job
        ens = simulate(spec, mu0, n, dt, t_end, seed)[-1]
        return wasserstein2_density(from_samples(mu0.grid, ens.x), ref)

    jobs = [(n, s) for n in n_list for s in seeds]
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            vals = list(ex.map(one, jobs))
    else:
        vals = [one(j) for j in jobs]
    rows = []
    for i, n in enumerate(n_list):
        g = vals[i * len(seeds):(i + 1) * len(seeds)]
        rows.append(GapRow(n, float(np.median(g)), tuple(g)))
    return rows


def loglog_slope(rows):
    n = np.log([r.n for r in rows])
    m = np.log([r.median for r in rows])
    return float(np.polyfit(n, m, 1)[0])
