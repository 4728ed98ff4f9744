"""Long-time behaviour: limit classification, basin probes and radius certificates."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .flow import FlowParams, evolve, fp_step
from .measure import (
    GridMeasure, free_energy, gaussian_init, mean, mixture, quantile_function,
    reflect, shift, wasserstein2,
)
from .tilt import legendre, tilted_measure

LABELS = ("minus", "zero", "plus")
MATCH_TOL = 1e-3
ENERGY_TOL = 1e-8
MEAN_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ClassificationResult:
    label: str
    distances: dict
    energy: float
    t_final: float
    status: str
    trajectory: object = None
    reason: str = ""

    def row(self):
        d = self.distances
        return [self.label, self.t_final, d.get("minus", math.nan), d.get("zero", math.nan),
                d.get("plus", math.nan), self.energy]


def label_measure(triple, mu, match_tol=MATCH_TOL):
    """Nearest stationary measure if it is within ``match_tol`` and beats the runner-up by 2x."""
    dist = {k: wasserstein2(mu, m) for k, m in triple.measures().items()}
    order = sorted(dist, key=dist.get)
    best, second = dist[order[0]], dist[order[1]]
    if best < match_tol and best < 0.5 * second:
        return order[0], dist
    return "undecided", dist


def classify(spec, triple, mu0, params=None, match_tol=MATCH_TOL, keep_trajectory=False):
    if mu0.grid != triple.grid:
        raise ValueError("initial measure and stationary triple use different grids")
    params = params or FlowParams()
    traj = evolve(spec, mu0, params)
    fin = traj.final
    label, dist = label_measure(triple, fin.measure, match_tol)
    reason = ""
    if traj.status != "stationary":
        label, reason = "undecided", f"not stationary by t={fin.t:g}"
    elif label == "undecided":
        reason = "stationary state matches no reference measure"
    return ClassificationResult(
        label=label, distances=dist, energy=fin.energy, t_final=fin.t,
        status=traj.status, trajectory=traj if keep_trajectory else None, reason=reason,
    )


@dataclass(frozen=True)
class SmallBasinPrediction:
    applicable: bool
    predicted: str | None


def small_basin_predict(spec, triple, mu0, energy_tol=ENERGY_TOL, mean_tol=MEAN_TOL):
    """Sign rule: energy at most F(mu0) and a nonzero mean determine the limit."""
    m = mean(mu0)
    ok = free_energy(spec, mu0) <= triple.f_zero + energy_tol and abs(m) > mean_tol
    if not ok:
        return SmallBasinPrediction(False, None)
    return SmallBasinPrediction(True, "minus" if m < 0 else "plus")


@dataclass(frozen=True, eq=False)
class BasinCertificate:
    anchor: GridMeasure
    label: str
    t_settle: float
    delta: float
    w2_to_target: float
    energy_excess: float
    contraction: float
    energy_gap: float
    lam: float
    m_star: float

    def to_dict(self):
        return {
            "label": self.label,
            "t_settle": self.t_settle,
            "delta": self.delta,
            "w2_to_target": self.w2_to_target,
            "energy_excess": self.energy_excess,
            "contraction_factor": self.contraction,
            "energy_gap": self.energy_gap,
            "lambda": self.lam,
            "m_star": self.m_star,
            "anchor_mean": mean(self.anchor),
        }


class CertificateUnavailable(RuntimeError):
    pass


def certificate_radius(lam, t_settle, m_star, energy_gap):
    e2 = math.exp(2.0 * lam * t_settle)
    return min(e2 * m_star / 4.0, math.sqrt(e2 * energy_gap / (4.0 * abs(lam))))


def basin_certificate(spec, triple, nu, params, lam, target="minus"):
    """First record time t' at which the flow from ``nu`` is close to the target
    minimiser in distance and energy and e^{lam t'} <= 1/2, and the radius
    delta derived from it.

    Steps of ``params.dt`` are taken without a stationarity stop; every
    ``params.record_every``-th step is a candidate for t'.
    """
    if target not in ("minus", "plus"):
        raise ValueError("target must be minus or plus")
    if not lam < 0:
        raise ValueError("lambda must be negative")
    ref = triple.mu_minus if target == "minus" else triple.mu_plus
    f_ref = triple.f_minus if target == "minus" else triple.f_plus
    gap = triple.energy_gap
    dt = params.dt
    n_max = int(math.ceil(params.t_max / dt - 1e-9))
    mu = nu
    for k in range(n_max + 1):
        if k:
            mu = fp_step(spec, mu, dt)
        if k % params.record_every:
            continue
        t = k * dt
        w = wasserstein2(mu, ref)
        excess = free_energy(spec, mu) - f_ref
        c = math.exp(lam * t)
        if w <= triple.m_star / 4.0 and excess <= gap / 4.0 and c <= 0.5:
            return BasinCertificate(
                anchor=nu, label=target, t_settle=t,
                delta=certificate_radius(lam, t, triple.m_star, gap),
                w2_to_target=w, energy_excess=excess, contraction=c,
                energy_gap=gap, lam=lam, m_star=triple.m_star,
            )
    raise CertificateUnavailable(f"conditions not met before t={params.t_max:g}")


def _transport(nu, target, refine):
    g = nu.grid
    e = g.edges
    fine = np.interp(np.arange(g.n * refine + 1) / refine, np.arange(g.n + 1), e)
    cdf = np.interp(fine, e, nu.cdf_at_edges())
    return fine, cdf, quantile_function(target, cdf)


def displacement_blend(nu, target, s, refine=8):
    """Point at parameter s on the W2 geodesic from ``nu`` towards ``target``.

    Pushes nu forward by (1 - s) id + s T with T the monotone map onto the
    target. At s = 0 the result equals nu up to the rounding of CDF values
    near one, so tail cells lighter than ~1e-16 are lost.
    """
    fine, cdf, t_map = _transport(nu, target, refine)
    moved = (1.0 - s) * fine + s * t_map
    keep = np.concatenate([[True], np.diff(moved) > 0])
    e = nu.grid.edges
    new_cdf = np.interp(e, moved[keep], cdf[keep], left=0.0, right=1.0)
    new_cdf[0], new_cdf[-1] = 0.0, 1.0
    return GridMeasure.from_weights(nu.grid, np.maximum(np.diff(new_cdf), 0.0))


def displacement_norm(nu, target, refine=8):
    """||T - id|| in L2(nu); the geodesic point at s lies at W2 distance s times this."""
    fine, cdf, t_map = _transport(nu, target, refine)
    d = t_map - fine
    w = np.diff(cdf)
    return float(np.sqrt(np.sum(w * (d[:-1] ** 2 + d[:-1] * d[1:] + d[1:] ** 2)) / 3.0))


def random_direction(spec, nu, rng, grid):
    """Random convex mixture of tilted measures and cell-shifted copies of nu."""
    parts = []
    for _ in range(rng.integers(1, 4)):
        parts.append(tilted_measure(spec, float(rng.uniform(-2.5, 2.5)), grid))
    for _ in range(rng.integers(1, 3)):
        parts.append(shift(nu, int(rng.integers(-40, 41))))
    return mixture(parts, rng.dirichlet(np.ones(len(parts))))


def perturb(spec, nu, radius, rng):
    """A measure at W2 distance ``radius`` from nu along a random geodesic.

    The distance is set through the displacement norm rather than measured:
    radii from the certificate are far below the rounding floor of a
    CDF-based W2 evaluation.
    """
    target = random_direction(spec, nu, rng, nu.grid)
    norm = displacement_norm(nu, target)
    s = radius / norm
    if not s <= 1.0:
        raise ValueError("random direction is shorter than the requested radius")
    return displacement_blend(nu, target, s), s * norm


def certificate_sweep(spec, triple, cert, params, n_trials, seed, threads=1):
    """Classify ``n_trials`` seeded perturbations of the anchor with W2 size below delta."""
    rng = np.random.default_rng(seed)
    radii = cert.delta * rng.uniform(0.1, 0.9, size=n_trials)
    child = rng.spawn(n_trials)
    perts = [perturb(spec, cert.anchor, r, c) for r, c in zip(radii, child)]

    def run(pw):
        res = classify(spec, triple, pw[0], params)
        return {"radius": pw[1], "label": res.label, "t_final": res.t_final}

    return _map(run, perts, threads)


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def basin_sweep(spec, triple, pairs, params, threads=1, max_escape=1e-4):
    """Classify Gaussian initial data for each (mean, var) pair, in input order."""

    def run(mv):
        m, v = mv
        try:
            mu0 = gaussian_init(triple.grid, m, v, max_escape=max_escape)
        except ValueError as exc:
            return (m, v, ClassificationResult("undecided", {}, math.nan, math.nan, "error", reason=str(exc)))
        return (m, v, classify(spec, triple, mu0, params))

    return _map(run, list(pairs), threads)


def sweep_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["mean", "var", "label", "t_final", "W2_minus", "W2_zero", "W2_plus", "F_final"])
    for m, v, res in rows:
        r = res.row()
        w.writerow([f"{m:.17g}", f"{v:.17g}", r[0]] + [f"{x:.17g}" for x in r[1:]])
    return buf.getvalue()


def boundary_probe(spec, triple, etas, params):
    """Classify the tilted measures with means -eta and +eta for each eta."""
    etas = [float(e) for e in etas]
    if any(e <= 0 for e in etas):
        raise ValueError("etas must be positive")
    if any(b >= a for a, b in zip(etas, etas[1:])):
        raise ValueError("etas must be strictly decreasing")
    rows = []
    for eta in etas:
        s = legendre(spec, eta, triple.grid).dphi
        lo = classify(spec, triple, tilted_measure(spec, -s, triple.grid), params)
        hi_mu = tilted_measure(spec, s, triple.grid)
        hi = classify(spec, triple, hi_mu, params)
        rows.append({
            "eta": eta, "label_neg": lo.label, "label_pos": hi.label,
            "w2_to_zero": wasserstein2(hi_mu, triple.mu_zero),
        })
    return rows


def symmetric_bimodal(grid, center, var, weight=0.5):
    """Equal-weight mixture of N(-c, v) and N(c, v), exactly symmetric."""
    a = gaussian_init(grid, -center, var)
    return mixture([a, reflect(a)], [weight, weight])

