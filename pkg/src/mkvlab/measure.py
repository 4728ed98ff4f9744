"""Probability measures on a uniform symmetric grid of [-L, L].

A :class:`GridMeasure` stores cell masses ``p_i``; its density is the
piecewise-constant ``rho_i = p_i / dz``. Everything here is a pure function
of immutable inputs.

Two transport distances are provided:

* :func:`wasserstein2` treats each cell mass as an atom at the cell centre
  (exact discrete optimal transport between the atomic measures);
* :func:`wasserstein2_density` treats each cell mass as spread uniformly over
  its cell, which is the measure whose entropy :func:`free_energy` evaluates.
  It is the one to use for speeds along a curve, because the atomic distance
  between two close smooth measures scales like the square root of the mass
  moved.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import special

from ._numerics import mirror_odd_dot, mirror_sum, symmetric_centers, symmetric_nodes

MASS_TOL = 1e-12
#: multiplied by 1/dz: densities below this are treated as vacuum in log-density sums
DENSITY_FLOOR = 1e-14
MKV1_MAGIC = b"MKV1"


@dataclass(frozen=True)
class Grid:
    """Uniform grid of ``n`` cells on [-L, L]; ``n`` even so 0 is a cell edge."""

    half_width: float
    n: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")
        if self.n < 16 or self.n % 2:
            raise ValueError(f"cell count must be even and >= 16, got {self.n}")

    @property
    def dz(self):
        return 2.0 * self.half_width / self.n

    @cached_property
    def centers(self):
        z = symmetric_centers(self.half_width, self.n)
        z.flags.writeable = False
        return z

    @cached_property
    def edges(self):
        e = symmetric_nodes(self.half_width, self.n)
        e.flags.writeable = False
        return e


class GridMeasure:
    """Cell masses on a :class:`Grid` (nonnegative, summing to one)."""

    __slots__ = ("grid", "masses")

    def __init__(self, grid, masses, check=True):
        p = np.array(masses, dtype=float)
        if p.shape != (grid.n,):
            raise ValueError(f"expected {grid.n} masses, got shape {p.shape}")
        if check:
            if not np.all(np.isfinite(p)):
                raise ValueError("masses must be finite")
            if np.any(p < 0):
                raise ValueError(f"negative mass {p.min():.3g}")
            total = mirror_sum(p)
            if abs(total - 1.0) > MASS_TOL:
                raise ValueError(f"masses sum to {total!r}, not 1")
        p.flags.writeable = False
        self.grid = grid
        self.masses = p

    @classmethod
    def from_weights(cls, grid, weights):
        """Normalise nonnegative weights to a probability measure."""
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        total = mirror_sum(w)
        if not total > 0:
            raise ValueError("weights sum to zero")
        return cls(grid, w / total)

    @property
    def density(self):
        return self.masses / self.grid.dz

    def cdf_at_edges(self):
        c = np.empty(self.grid.n + 1)
        c[0] = 0.0
        np.cumsum(self.masses, out=c[1:])
        c[-1] = 1.0
        return np.minimum(c, 1.0)

    def __repr__(self):
        return f"GridMeasure(n={self.grid.n}, L={self.grid.half_width}, mean={mean(self):.6g})"


def _same_grid(mu, nu):
    if mu.grid != nu.grid:
        raise ValueError("measures live on different grids")


def mean(mu):
    return mirror_odd_dot(mu.grid.centers, mu.masses)


def second_moment(mu):
    z = mu.grid.centers
    return mirror_sum(z * z * mu.masses)


def variance(mu):
    m = mean(mu)
    return second_moment(mu) - m * m


def abs_moment(mu, power):
    return mirror_sum(np.abs(mu.grid.centers) ** power * mu.masses)


def wasserstein2_atoms(x, p, y, q):
    """Exact W2 between sum_i p_i delta_{x_i} and sum_j q_j delta_{y_j}.

    ``x`` and ``y`` must be sorted ascending. Uses the left-continuous
    quantile functions, which are piecewise constant between the merged
    cumulative-mass breakpoints, so the quantile integral is a finite sum.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cp = np.cumsum(p, dtype=float)
    cq = np.cumsum(q, dtype=float)
    cp /= cp[-1]
    cq /= cq[-1]
    qs = np.union1d(cp, cq)
    qs = qs[qs > 0]
    ix = np.minimum(np.searchsorted(cp, qs, side="left"), x.size - 1)
    iy = np.minimum(np.searchsorted(cq, qs, side="left"), y.size - 1)
    dq = np.diff(qs, prepend=0.0)
    w2 = float(np.sum(dq * (x[ix] - y[iy]) ** 2))
    return float(np.sqrt(max(w2, 0.0)))


def wasserstein2(mu, nu):
    """W2 between the atomic measures sum_i p_i delta_{z_i} on a common grid."""
    _same_grid(mu, nu)
    z = mu.grid.centers
    return wasserstein2_atoms(z, mu.masses, z, nu.masses)


def _quantile_in_cells(cdf, edges, dz, q, cell):
    lo = cdf[cell]
    mass = cdf[cell + 1] - lo
    frac = np.where(mass > 0, (q - lo) / np.where(mass > 0, mass, 1.0), 0.0)
    return edges[cell] + dz * np.clip(frac, 0.0, 1.0)


def wasserstein2_density(mu, nu):
    """W2 between the piecewise-constant densities of two grid measures.

    Both quantile functions are piecewise linear between the merged
    cumulative-mass breakpoints, so the integral of the squared difference is
    evaluated exactly segment by segment.
    """
    _same_grid(mu, nu)
    g = mu.grid
    cu = mu.cdf_at_edges()
    cv = nu.cdf_at_edges()
    qs = np.union1d(cu, cv)
    a, b = qs[:-1], qs[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    mid = 0.5 * (a + b)
    n = g.n
    ku = np.clip(np.searchsorted(cu, mid, side="left") - 1, 0, n - 1)
    kv = np.clip(np.searchsorted(cv, mid, side="left") - 1, 0, n - 1)
    e = g.edges
    da = _quantile_in_cells(cu, e, g.dz, a, ku) - _quantile_in_cells(cv, e, g.dz, a, kv)
    db = _quantile_in_cells(cu, e, g.dz, b, ku) - _quantile_in_cells(cv, e, g.dz, b, kv)
    w2 = float(np.sum((b - a) * (da * da + da * db + db * db)) / 3.0)
    return float(np.sqrt(max(w2, 0.0)))


def quantile_function(mu, q):
    """Quantile function of the piecewise-constant density (inverse of the linear CDF)."""
    q = np.asarray(q, dtype=float)
    cdf = mu.cdf_at_edges()
    cell = np.clip(np.searchsorted(cdf, q, side="left") - 1, 0, mu.grid.n - 1)
    return _quantile_in_cells(cdf, mu.grid.edges, mu.grid.dz, q, cell)


def free_energy(spec, mu):
    """Entropy of the cell densities + potential energy - (J/2) mean^2.

    Uses the convention 0 log 0 = 0; grid measures always have a density so
    the result is finite.
    """
    p = mu.masses
    z = mu.grid.centers
    ent = mirror_sum(special.xlogy(p, p / mu.grid.dz))
    pot = mirror_sum(p * spec.psi(z))
    m = mean(mu)
    return ent + pot - 0.5 * spec.j * m * m


def relative_entropy(mu, nu):
    """sum p log(p/q); +inf when mu charges a cell that nu does not."""
    _same_grid(mu, nu)
    # kl_div adds q - p termwise: same total, but every summand is >= 0
    return mirror_sum(special.kl_div(mu.masses, nu.masses))


def log_density_gradient(mu):
    """Finite-difference d/dz log rho on cells above the density floor.

    Centred differences in the interior, one-sided where a neighbour is
    missing or below the floor; NaN where no usable neighbour exists.
    """
    g = mu.grid
    rho = mu.density
    ok = rho >= DENSITY_FLOOR / g.dz
    lr = np.where(ok, np.log(np.where(ok, rho, 1.0)), np.nan)
    left = np.full(g.n, np.nan)
    right = np.full(g.n, np.nan)
    left[1:] = lr[:-1]
    right[:-1] = lr[1:]
    lok = np.isfinite(left)
    rok = np.isfinite(right)
    d = np.full(g.n, np.nan)
    both = ok & lok & rok
    d[both] = (right[both] - left[both]) / (2.0 * g.dz)
    only_r = ok & rok & ~lok
    d[only_r] = (right[only_r] - lr[only_r]) / g.dz
    only_l = ok & lok & ~rok
    d[only_l] = (lr[only_l] - left[only_l]) / g.dz
    return d


def metric_slope_sq(spec, mu):
    """Discrete squared metric slope sum_i p_i |d log rho + Psi' - J m|^2."""
    z = mu.grid.centers
    d = log_density_gradient(mu)
    r = d + spec.dpsi(z) - spec.j * mean(mu)
    terms = np.where(np.isfinite(r), mu.masses * r * r, 0.0)
    return mirror_sum(terms)


def reflect(mu):
    """Push-forward under z -> -z (exact on a symmetric grid)."""
    return GridMeasure(mu.grid, mu.masses[::-1], check=False)


def shift(mu, k):
    """Translate by ``k`` cells; mass pushed past the boundary piles up in the end cell."""
    p = mu.masses
    n = p.size
    out = np.zeros(n)
    idx = np.clip(np.arange(n) + int(k), 0, n - 1)
    np.add.at(out, idx, p)
    return GridMeasure(mu.grid, out, check=False)


def point_mass(grid, k):
    p = np.zeros(grid.n)
    p[k] = 1.0
    return GridMeasure(grid, p)


def _std_normal_cell_mass(a, b):
    # erfc on the side away from the bulk keeps tail cells accurate; the
    # branch structure is odd-symmetric so mirrored inputs give mirrored output
    s = np.sqrt(0.5)
    out = np.empty_like(a)
    upper = a >= 0
    lower = b <= 0
    mid = ~(upper | lower)
    out[upper] = 0.5 * (special.erfc(a[upper] * s) - special.erfc(b[upper] * s))
    out[lower] = 0.5 * (special.erfc(-b[lower] * s) - special.erfc(-a[lower] * s))
    out[mid] = 1.0 - 0.5 * (special.erfc(b[mid] * s) + special.erfc(-a[mid] * s))
    return out


def gaussian_escape(grid, mean_, var):
    sd = np.sqrt(var)
    L = grid.half_width
    s = np.sqrt(0.5)
    return float(0.5 * special.erfc((L - mean_) / sd * s) + 0.5 * special.erfc((L + mean_) / sd * s))


def gaussian_init(grid, mean_, var, max_escape=1e-4):
    """Cell masses of N(mean, var) from CDF differences, renormalised to one.

    Rejects ``var <= 0`` and Gaussians losing more than ``max_escape`` of
    their mass outside [-L, L].
    """
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var}")
    esc = gaussian_escape(grid, mean_, var)
    if esc > max_escape:
        raise ValueError(
            f"N({mean_}, {var}) loses {esc:.3g} of its mass outside [-{grid.half_width}, {grid.half_width}]"
        )
    sd = np.sqrt(var)
    e = grid.edges
    a = (e[:-1] - mean_) / sd
    b = (e[1:] - mean_) / sd
    return GridMeasure.from_weights(grid, _std_normal_cell_mass(a, b))


def mixture(measures, weights):
    grid = measures[0].grid
    w = np.asarray(weights, dtype=float)
    total = sum(wi * m.masses for wi, m in zip(w, measures))
    return GridMeasure.from_weights(grid, total)


def symmetrize(mu):
    """(mu + reflect(mu)) / 2, exactly symmetric."""
    return GridMeasure(mu.grid, 0.5 * (mu.masses + mu.masses[::-1]), check=False)


def from_samples(grid, points):
    """Histogram of ``points`` (clipped to [-L, L]) normalised to mass one."""
    x = np.asarray(points, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("need at least one point")
    L = grid.half_width
    k = np.floor((np.clip(x, -L, L) + L) / grid.dz).astype(np.int64)
    k = np.clip(k, 0, grid.n - 1)
    counts = np.bincount(k, minlength=grid.n).astype(float)
    return GridMeasure(grid, counts / x.size, check=False)


# -- serialisation ---------------------------------------------------------

def to_mkv1(mu):
    """Binary form: b"MKV1", u32 n, f64 L, n x f64 masses (little-endian)."""
    g = mu.grid
    return MKV1_MAGIC + struct.pack("<Id", g.n, g.half_width) + np.asarray(mu.masses, "<f8").tobytes()


def from_mkv1(data):
    if data[:4] != MKV1_MAGIC:
        raise ValueError("not an MKV1 blob")
    n, L = struct.unpack_from("<Id", data, 4)
    body = data[16:]
    if len(body) != 8 * n:
        raise ValueError(f"MKV1 payload has {len(body)} bytes, expected {8 * n}")
    masses = np.frombuffer(body, dtype="<f8").astype(float)
    return GridMeasure(Grid(L, n), masses, check=False)


def write_mkv1(path, mu):
    with open(path, "wb") as fh:
        fh.write(to_mkv1(mu))


def read_mkv1(path):
    with open(path, "rb") as fh:
        return from_mkv1(fh.read())


def to_csv(mu):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["z", "p"])
    for z, p in zip(mu.grid.centers, mu.masses):
        w.writerow([f"{z:.17g}", f"{p:.17g}"])
    return buf.getvalue()


def from_csv(text, half_width):
    rows = list(csv.reader(io.StringIO(text)))
    if rows[0] != ["z", "p"]:
        raise ValueError("expected header z,p")
    masses = [float(r[1]) for r in rows[1:]]
    return GridMeasure(Grid(half_width, len(masses)), masses, check=False)
