"""Log-partition function, its Legendre transform and the tilted Gibbs family.

All integrals are midpoint sums over the cell centres of a :class:`Grid`,
i.e. the same nodes a :class:`GridMeasure` lives on. With that choice the
discrete identities are exact: the mean of ``tilted_measure(s)`` is
``tilted_mean(s)``, and ``free_energy(tilted_measure(legendre(m).dphi))``
equals ``hbar(m)`` up to root-finding precision.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from ._numerics import mirror_odd_dot, mirror_sum
from .measure import Grid, GridMeasure, free_energy, mean

DEFAULT_CELLS = 400
SIGMA_CAP = 1e6


class QuadratureError(ArithmeticError):
    pass


class BracketError(ValueError):
    pass


def default_grid(spec, n=DEFAULT_CELLS):
    return Grid(spec.half_width, n)


def _log_weights(spec, sigma, grid):
    z = grid.centers
    e = sigma * z - spec.psi(z)
    top = float(np.max(e))
    if not np.isfinite(top):
        raise QuadratureError(f"exponent not finite at sigma={sigma}")
    return z, np.exp(e - top), top


def log_partition(spec, sigma, grid=None):
    """log of sum_i dz * exp(sigma z_i - Psi(z_i)), shifted by the max exponent."""
    grid = grid or default_grid(spec)
    _, w, top = _log_weights(spec, sigma, grid)
    s = mirror_sum(w)
    out = top + np.log(s * grid.dz)
    if not np.isfinite(out):
        raise QuadratureError(f"log-partition not finite at sigma={sigma}")
    return float(out)


def tilted_moments(spec, sigma, grid=None):
    """(mean, variance) of the tilted measure; the variance is d mean / d sigma."""
    grid = grid or default_grid(spec)
    z, w, _ = _log_weights(spec, sigma, grid)
    s = mirror_sum(w)
    m = mirror_odd_dot(z, w) / s
    var = mirror_sum(z * z * w) / s - m * m
    return m, max(var, 0.0)


def tilted_mean(spec, sigma, grid=None):
    return tilted_moments(spec, sigma, grid)[0]


@dataclass(frozen=True)
class LegendrePoint:
    phi: float
    dphi: float


def max_mean(grid):
    """Supremum of attainable means on the grid (the outermost cell centre)."""
    return float(grid.centers[-1])


def _conjugate_slope(spec, m, grid):
    # m > 0 here; the odd extension is applied by the caller
    f = lambda s: tilted_mean(spec, s, grid) - m
    hi = 1.0
    while f(hi) <= 0:
        hi *= 2.0
        if hi > SIGMA_CAP:
            raise BracketError(f"mean {m} not attainable below sigma={SIGMA_CAP:g}")
    sigma = optimize.bisect(f, 0.0, hi, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200)
    for _ in range(2):
        mu, var = tilted_moments(spec, sigma, grid)
        if var <= 0:
            break
        trial = sigma - (mu - m) / var
        if abs(f(trial)) <= abs(mu - m):
            sigma = trial
    return sigma


def legendre(spec, m, grid=None):
    """phi(m) = sup_s (s m - phi*(s)) and its maximiser s = phi'(m).

    The slope is exactly odd in ``m``: negative arguments are solved as
    their mirror image.
    """
    grid = grid or default_grid(spec)
    m = float(m)
    top = max_mean(grid)
    if not abs(m) < top:
        raise BracketError(f"mean {m} outside the attainable range (-{top}, {top})")
    if m == 0.0:
        sigma = 0.0
    else:
        sigma = _conjugate_slope(spec, abs(m), grid)
        sigma = sigma if m > 0 else -sigma
    return LegendrePoint(phi=sigma * m - log_partition(spec, sigma, grid), dphi=float(sigma))


def hbar(spec, m, grid=None):
    """Macroscopic energy phi(m) - (J/2) m^2."""
    return legendre(spec, m, grid).phi - 0.5 * spec.j * m * m


@dataclass(frozen=True)
class CriticalPoints:
    m_star: float | None
    count: int

    @property
    def roots(self):
        if self.count == 1:
            return (0.0,)
        return (-self.m_star, 0.0, self.m_star)


class CriticalPointError(RuntimeError):
    pass


def critical_points(spec, grid=None, m_lo=1e-6, n_scan=400):
    """Roots of g(m) = tilted_mean(J m) - m, assumed to be {0} or {-m*, 0, m*}."""
    grid = grid or default_grid(spec)
    m_hi = 0.99 * max_mean(grid)
    g = lambda m: tilted_mean(spec, spec.j * m, grid) - m
    ms = np.linspace(m_lo, m_hi, n_scan)
    vals = np.array([g(m) for m in ms])
    sgn = np.sign(vals)
    flips = np.nonzero(sgn[:-1] * sgn[1:] < 0)[0]
    zeros = np.nonzero(vals == 0)[0]
    if flips.size + zeros.size == 0:
        return CriticalPoints(None, 1)
    if flips.size + zeros.size > 1:
        raise CriticalPointError(
            f"g changes sign {flips.size + zeros.size} times on ({m_lo}, {m_hi}]; "
            "expected a single positive root"
        )
    if zeros.size:
        return CriticalPoints(float(ms[zeros[0]]), 3)
    k = flips[0]
    root = optimize.brentq(g, ms[k], ms[k + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return CriticalPoints(float(root), 3)


def tilted_measure(spec, sigma, grid):
    """Cell masses proportional to exp(sigma z_i - Psi(z_i))."""
    _, w, _ = _log_weights(spec, sigma, grid)
    if not mirror_sum(w) > 0:
        raise QuadratureError(f"normalisation underflow at sigma={sigma}")
    return GridMeasure.from_weights(grid, w)


@dataclass(frozen=True, eq=False)
class StationaryTriple:
    m_star: float
    sigma_star: float
    mu_minus: GridMeasure
    mu_zero: GridMeasure
    mu_plus: GridMeasure
    f_minus: float
    f_zero: float
    f_plus: float

    @property
    def grid(self):
        return self.mu_zero.grid

    @property
    def energy_gap(self):
        """F(mu0) - F(mu-), positive in the three-critical-point regime."""
        return self.f_zero - self.f_minus

    def measures(self):
        return {"minus": self.mu_minus, "zero": self.mu_zero, "plus": self.mu_plus}

    def energies(self):
        return {"minus": self.f_minus, "zero": self.f_zero, "plus": self.f_plus}

    def to_dict(self):
        return {
            "m_star": self.m_star,
            "sigma_star": self.sigma_star,
            "f_minus": self.f_minus,
            "f_zero": self.f_zero,
            "f_plus": self.f_plus,
            "energy_gap": self.energy_gap,
            "mean_minus": mean(self.mu_minus),
            "mean_zero": mean(self.mu_zero),
            "mean_plus": mean(self.mu_plus),
            "n": self.grid.n,
            "half_width": self.grid.half_width,
        }


def stationary_triple(spec, grid):
    cp = critical_points(spec, grid)
    if cp.count != 3:
        raise CriticalPointError("only the symmetric critical point exists; no triple")
    sigma = legendre(spec, cp.m_star, grid).dphi
    plus = tilted_measure(spec, sigma, grid)
    minus = tilted_measure(spec, -sigma, grid)
    zero = tilted_measure(spec, 0.0, grid)
    return StationaryTriple(
        m_star=cp.m_star, sigma_star=sigma,
        mu_minus=minus, mu_zero=zero, mu_plus=plus,
        f_minus=free_energy(spec, minus), f_zero=free_energy(spec, zero),
        f_plus=free_energy(spec, plus),
    )


def hbar_table(spec, ms, grid=None):
    """Rows (m, phi(m), hbar(m)) over the given means."""
    grid = grid or default_grid(spec)
    rows = []
    for m in ms:
        lp = legendre(spec, float(m), grid)
        rows.append((float(m), lp.phi, lp.phi - 0.5 * spec.j * float(m) ** 2))
    return rows


def hbar_table_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["m", "phi", "hbar"])
    for r in rows:
        w.writerow([f"{x:.17g}" for x in r])
    return buf.getvalue()
