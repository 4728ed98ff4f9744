"""Single-site potentials and a numerical audit of the standing assumptions.

A potential is carried around as a :class:`PotentialSpec`: vectorised
evaluators for Psi, Psi' and Psi'', the interaction strength J and the
truncation half-width L on which all grid computations live.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._numerics import mirror_odd_dot, mirror_sum, symmetric_nodes, trapezoid_weights

log = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], np.ndarray]

#: e^{-Psi(+-L)} / max e^{-Psi} above this triggers a truncation warning.
TAIL_WARN_RATIO = 1e-12


class TruncationWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Potential Psi, interaction strength J and spatial truncation [-L, L].

    ``psi_shift`` is an additive constant used only when auditing the growth
    bound; adding a constant to Psi leaves every measure, flow and energy
    difference unchanged.
    """

    psi: Evaluator
    dpsi: Evaluator
    ddpsi: Evaluator
    j: float
    eps_growth: float
    c_growth: float
    half_width: float
    psi_shift: float = 0.0
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.j > 0:
            raise ValueError(f"interaction strength must be positive, got {self.j}")
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")
        if not (self.eps_growth > 0 and self.c_growth > 0):
            raise ValueError("growth constants must be positive")

    def with_j(self, j):
        return PotentialSpec(
            self.psi, self.dpsi, self.ddpsi, float(j), self.eps_growth,
            self.c_growth, self.half_width, self.psi_shift, self.family,
            {**self.params, "j": float(j)},
        )

    def describe(self):
        return {"family": self.family, **self.params}


def make_even_polynomial(coeffs, j, half_width):
    """Psi(z) = sum_k coeffs[k] * z^(2k+2), i.e. ``coeffs = (c2, c4, c6, ...)``.

    The leading coefficient must be positive. The growth constants use half
    the leading coefficient and an exact additive shift, so the bound holds
    on all of R, not just on the truncation window.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.ndim != 1 or c.size < 2:
        raise ValueError("need at least a quadratic and a quartic coefficient")
    if not c[-1] > 0:
        raise ValueError("leading coefficient must be positive")
    if not half_width > 0:
        raise ValueError("half_width must be positive")
    deg = 2 * c.size
    powers = np.arange(2, deg + 1, 2)

    def psi(z):
        z = np.asarray(z, dtype=float)
        z2 = z * z
        return sum(ck * z2 ** (k + 1) for k, ck in enumerate(c))

    def dpsi(z):
        z = np.asarray(z, dtype=float)
        z2 = z * z
        return sum(pk * ck * z * z2 ** k for k, (pk, ck) in enumerate(zip(powers, c)))

    def ddpsi(z):
        z = np.asarray(z, dtype=float)
        z2 = z * z
        return sum(pk * (pk - 1) * ck * z2 ** k for k, (pk, ck) in enumerate(zip(powers, c)))

    # With t = z^2: P(t) + s >= (lead/2)(t^d - 1) iff s >= -min_{t>=0} Q(t) - lead/2,
    # Q(t) = P(t) - (lead/2) t^d; minimise Q exactly over its critical points.
    lead = c[-1]
    q = np.concatenate([[0.0], c])
    q[-1] -= 0.5 * lead
    crit = np.roots(np.polynomial.polynomial.polyder(q)[::-1])
    crit = crit[(np.abs(crit.imag) < 1e-12) & (crit.real >= 0)].real
    q_min = min([0.0] + [float(np.polynomial.polynomial.polyval(t, q)) for t in crit])
    c_growth = 0.5 * lead
    shift = max(0.0, -q_min - c_growth)
    return PotentialSpec(
        psi, dpsi, ddpsi, float(j), eps_growth=float(deg - 2), c_growth=float(c_growth),
        half_width=float(half_width), psi_shift=float(shift), family="even_polynomial",
        params={"coeffs": [float(x) for x in c], "j": float(j), "half_width": float(half_width)},
    )


def make_quartic(a, b, j, half_width):
    """Psi(z) = a z^4 + b z^2 with analytic derivatives and eps = 2."""
    if not a > 0:
        raise ValueError(f"quartic coefficient must be positive, got {a}")
    if not half_width > 0:
        raise ValueError(f"half_width must be positive, got {half_width}")
    a = float(a)
    b = float(b)

    def psi(z):
        z2 = np.asarray(z, dtype=float) ** 2
        return a * z2 * z2 + b * z2

    def dpsi(z):
        z = np.asarray(z, dtype=float)
        return 4.0 * a * (z * z * z) + 2.0 * b * z

    def ddpsi(z):
        z = np.asarray(z, dtype=float)
        return 12.0 * a * z * z + 2.0 * b

    # a z^4 + b z^2 + s >= (a/2)(z^4 - 1) iff s >= b^2/(2a) - a/2 (complete the square)
    shift = max(0.0, b * b / (2.0 * a) - 0.5 * a) if b < 0 else 0.0
    return PotentialSpec(
        psi, dpsi, ddpsi, float(j), eps_growth=2.0, c_growth=0.5 * a,
        half_width=float(half_width), psi_shift=shift, family="quartic",
        params={"a": a, "b": b, "j": float(j), "half_width": float(half_width)},
    )


def make_harmonic(k, j, half_width, eps_growth=1.0, c_growth=None):
    """Psi(z) = k z^2 / 2. Violates the super-quadratic growth bound for every eps > 0."""
    if not k > 0:
        raise ValueError("stiffness must be positive")
    k = float(k)
    return PotentialSpec(
        lambda z: 0.5 * k * np.asarray(z, dtype=float) ** 2,
        lambda z: k * np.asarray(z, dtype=float),
        lambda z: np.full(np.shape(z), k),
        float(j), eps_growth=float(eps_growth),
        c_growth=float(0.5 * k if c_growth is None else c_growth),
        half_width=float(half_width), family="harmonic",
        params={"k": k, "j": float(j), "half_width": float(half_width)},
    )


FAMILIES = {
    "quartic": (make_quartic, ("a", "b")),
    "harmonic": (make_harmonic, ("k",)),
    "even_polynomial": (make_even_polynomial, ("coeffs",)),
}


def make_potential(family, j, half_width, **params):
    try:
        factory, names = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown potential family {family!r}") from None
    missing = [n for n in names if n not in params]
    extra = sorted(set(params) - set(names))
    if missing or extra:
        raise ValueError(f"family {family!r} takes parameters {names}; missing={missing} extra={extra}")
    return factory(*(params[n] for n in names), j=j, half_width=half_width)


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of :func:`check_assumptions`; one flag per clause (1)-(5)."""

    clauses: dict
    variance: float
    threshold: float
    margins: dict
    inf_ddpsi: float
    convex_radius: float
    convex_modulus: float
    tail_ratio: float
    n_samples: int
    half_width: float
    tail_extent: float

    @property
    def all_pass(self):
        return all(self.clauses.values())

    def failed(self):
        return [k for k, ok in self.clauses.items() if not ok]

    def to_dict(self):
        return {
            "clauses": {str(k): bool(v) for k, v in self.clauses.items()},
            "all_pass": self.all_pass,
            "variance": self.variance,
            "threshold_inv_j": self.threshold,
            "margins": dict(self.margins),
            "inf_ddpsi": self.inf_ddpsi,
            "convex_radius": self.convex_radius,
            "convex_modulus": self.convex_modulus,
            "tail_ratio": self.tail_ratio,
            "n_samples": self.n_samples,
            "half_width": self.half_width,
            "tail_extent": self.tail_extent,
        }


def gibbs_variance(spec, n_cells=20000):
    """Variance of e^{-Psi}/Z on [-L, L] by composite trapezoid."""
    z = symmetric_nodes(spec.half_width, n_cells)
    w = trapezoid_weights(z.size, z[1] - z[0])
    e = -spec.psi(z)
    wt = w * np.exp(e - e.max())
    norm = mirror_sum(wt)
    mean = mirror_odd_dot(z, wt) / norm
    return mirror_sum(z * z * wt) / norm - mean * mean


def check_assumptions(spec, n_samples=2001, tol=1e-10, tail_factor=4.0):
    """Audit clauses (1)-(5) on a uniform sample of [-L, L].

    The growth bound (2) is additionally sampled out to ``tail_factor * L``
    because it is a statement about large |z|. Every clause is evaluated;
    failures are reported, never raised.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    L = spec.half_width
    n_cells = n_samples - 1 + (n_samples - 1) % 2
    z = symmetric_nodes(L, n_cells)
    psi = spec.psi(z)
    d1 = spec.dpsi(z)
    d2 = spec.ddpsi(z)
    clauses = {}
    margins = {}

    # (1) surrogate: Psi'' bounded below, and >= c > 0 outside a compact interval
    inf_d2 = float(np.min(d2))
    nonpos = np.abs(z[d2 <= 0])
    radius = float(nonpos.max()) if nonpos.size else 0.0
    outside = np.abs(z) > radius
    modulus = float(np.min(d2[outside])) if outside.any() else -np.inf
    clauses[1] = bool(np.isfinite(inf_d2) and modulus > 0 and radius < L)
    margins["1"] = modulus

    # (2) growth bound, up to the additive normalisation psi_shift
    zt = np.concatenate([z, np.linspace(L, tail_factor * L, n_samples)[1:]])
    zt = np.concatenate([zt, -zt[zt > L]])
    lhs = spec.psi(zt) + spec.psi_shift
    rhs = spec.c_growth * (np.abs(zt) ** (2.0 + spec.eps_growth) - 1.0)
    slack = lhs - rhs
    margins["2"] = float(np.min(slack / (1.0 + np.abs(rhs))))
    clauses[2] = bool(margins["2"] >= -tol)

    # (3) evenness
    asym = float(np.max(np.abs(psi - spec.psi(-z))))
    margins["3"] = -asym
    clauses[3] = bool(asym <= tol)

    # (4) variance of the reference Gibbs measure against 1/J
    var = gibbs_variance(spec)
    thr = 1.0 / spec.j
    margins["4"] = var - thr
    clauses[4] = bool(var > thr)

    # (5) Psi' convex on [0, L]: second differences of Psi' nonnegative
    pos = z >= 0
    sd = np.diff(d1[pos], 2)
    scale = 1.0 + np.max(np.abs(d1[pos]))
    margins["5"] = float(np.min(sd)) if sd.size else 0.0
    clauses[5] = bool(margins["5"] >= -tol * scale)

    e = -psi
    ratio = float(np.exp(max(e[0], e[-1]) - e.max()))
    if ratio > TAIL_WARN_RATIO:
        msg = f"e^(-Psi(+-L)) / max e^(-Psi) = {ratio:.3g}: truncation at L={L} is not negligible"
        warnings.warn(msg, TruncationWarning, stacklevel=2)
        log.warning(msg)

    return AssumptionReport(
        clauses=clauses, variance=float(var), threshold=thr, margins=margins,
        inf_ddpsi=inf_d2, convex_radius=radius, convex_modulus=modulus,
        tail_ratio=ratio, n_samples=int(z.size), half_width=float(L),
        tail_extent=float(tail_factor * L),
    )
