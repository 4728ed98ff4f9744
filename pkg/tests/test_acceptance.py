"""Acceptance suite on the reference setup.

Quartic Psi(z) = z^4/4 - z^2/2, J = 1.5, grid n = 400 on [-4, 4]. Each test
records a one-line verdict (printed in the terminal summary) before asserting.
"""

import math

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from mkvlab.ergodicity import (
    basin_certificate, certificate_sweep, classify, small_basin_predict, symmetric_bimodal,
)
from mkvlab.flow import (
    FlowParams, advance, check_energy_identity, check_regularization, contraction_ratio, evolve,
    record_path, reflected,
)
from mkvlab.jko import jko_flow, quantile_gap
from mkvlab.measure import (
    Grid, GridMeasure, free_energy, gaussian_escape, gaussian_init, metric_slope_sq, reflect,
    wasserstein2, wasserstein2_atoms,
)
from mkvlab.particles import loglog_slope, propagation_gap
from mkvlab.potential import make_harmonic
from mkvlab.tilt import hbar, hbar_table, legendre, log_partition, stationary_triple, tilted_measure

LABEL_F = {"minus": "f_minus", "zero": "f_zero", "plus": "f_plus"}
ETAS = (0.05, 0.2, 0.4)


def _tilted(spec, grid, m):
    return tilted_measure(spec, legendre(spec, m, grid).dphi, grid)


def _gaussians(grid, count, seed):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        m, v = float(rng.uniform(-1, 1)), float(rng.uniform(0.2, 1.0))
        if gaussian_escape(grid, m, v) <= 1e-4:
            out.append((m, v))
    return out


def _rough_two_bump(grid):
    z = grid.centers
    w = np.exp(-8 * (z + 1.2) ** 2) + 0.6 * np.exp(-8 * (z - 0.9) ** 2)
    w *= 1 + 0.5 * np.cos(40 * z)
    return GridMeasure.from_weights(grid, w)


@pytest.fixture(scope="module")
def gaussian_suite(spec, grid, triple):
    pairs = _gaussians(grid, 20, seed=2024)
    return [(m, v, gaussian_init(grid, m, v), classify(spec, triple, gaussian_init(grid, m, v)))
            for m, v in pairs]


def test_01_stationarity(spec, triple, fine_triple, criterion):
    slopes = {k: metric_slope_sq(spec, mu) for k, mu in fine_triple.measures().items()}
    drift = {k: wasserstein2(advance(spec, mu, 5.0, 0.05), mu)
             for k, mu in (("minus", triple.mu_minus), ("plus", triple.mu_plus))}
    ok = max(slopes.values()) <= 1e-6 and max(drift.values()) <= 1e-4
    criterion(1, "stationarity", ok,
              f"max slope^2 at n=1600 {max(slopes.values()):.2e}, max W2(S(5), mu) {max(drift.values()):.2e}")
    assert ok


def test_02_dissipation(spec, grid, criterion):
    worst = -math.inf
    for m, v in _gaussians(grid, 10, seed=7):
        traj = evolve(spec, gaussian_init(grid, m, v), FlowParams(dt=0.05, t_max=10.0, record_every=1))
        worst = max(worst, float(np.max(np.diff(traj.step_energies))))
    ok = worst <= 1e-10
    criterion(2, "dissipation", ok, f"largest per-step energy increase {worst:.2e}")
    assert ok


def test_03_energy_identity(spec, criterion):
    res = []
    for dt, n in ((1e-3, 400), (5e-4, 800)):
        g = Grid(4.0, n)
        traj = record_path(spec, gaussian_init(g, 0.5, 0.3), 1.0, dt, record_every=1)
        res.append(check_energy_identity(spec, traj))
    ok = res[0] <= 0.02 and res[1] < res[0]
    criterion(3, "energy identity", ok, f"residual {res[0]:.2e} at (1e-3, 400), {res[1]:.2e} at (5e-4, 800)")
    assert ok


def test_04_trichotomy(triple, gaussian_suite, criterion):
    labels = [r.label for *_, r in gaussian_suite]
    f_err = max(abs(r.energy - getattr(triple, LABEL_F[r.label])) for *_, r in gaussian_suite
                if r.label in LABEL_F)
    ok = all(lab in LABEL_F for lab in labels) and f_err <= 1e-3
    counts = {k: labels.count(k) for k in ("minus", "zero", "plus", "undecided")}
    criterion(4, "trichotomy", ok, f"labels {counts}, max |F_T - F(label)| {f_err:.2e}")
    assert ok


def test_05_sign_rule(spec, grid, triple, gaussian_suite, criterion):
    wrong = []
    cases = []
    for eta in ETAS:
        for sign, want in ((-1, "minus"), (1, "plus")):
            mu = _tilted(spec, grid, sign * eta)
            res = classify(spec, triple, mu)
            cases.append((mu, res))
            if res.label != want:
                wrong.append((sign * eta, res.label))
    cases += [(mu, r) for _, _, mu, r in gaussian_suite]
    applicable = agree = 0
    for mu, res in cases:
        pred = small_basin_predict(spec, triple, mu)
        if pred.applicable:
            applicable += 1
            agree += pred.predicted == res.label
    ok = not wrong and applicable > 0 and agree == applicable
    criterion(5, "sign rule", ok, f"tilt mislabels {wrong}, prediction agrees on {agree}/{applicable} applicable")
    assert ok


def test_06_symmetric_basin(spec, grid, triple, criterion):
    starts = [gaussian_init(grid, 0.0, 0.2), gaussian_init(grid, 0.0, 0.5), gaussian_init(grid, 0.0, 1.0),
              symmetric_bimodal(grid, 1.0, 0.2), symmetric_bimodal(grid, 0.6, 0.4)]
    labels = [classify(spec, triple, mu).label for mu in starts]
    mu = gaussian_init(grid, 0.4, 0.3)
    params = FlowParams(dt=0.05, t_max=10.0, stationarity_tol=1e-300, record_every=5)
    a = reflected(evolve(spec, mu, params))
    b = evolve(spec, reflect(mu), params).states
    gap = max(wasserstein2(x.measure, y.measure) for x, y in zip(a, b))
    ok = labels == ["zero"] * 5 and gap <= 1e-10 and len(a) == len(b)
    criterion(6, "symmetric basin", ok, f"labels {labels}, equivariance gap {gap:.1e}")
    assert ok


def test_07_contraction(spec, grid, lam, criterion):
    pairs = _gaussians(grid, 10, seed=11)
    worst = 0.0
    for k in range(5):
        mu = gaussian_init(grid, *pairs[2 * k])
        nu = gaussian_init(grid, *pairs[2 * k + 1])
        for t in (0.1, 1.0):
            worst = max(worst, contraction_ratio(spec, mu, nu, t, 0.01, lam))
    ok = worst <= 1 + 1e-3
    criterion(7, "contraction", ok, f"max W2(t) / (e^(-lam t) W2(0)) = {worst:.4f} with lam = {lam}")
    assert ok


def _regularization_cases(spec, grid):
    tr = stationary_triple(spec, grid)
    return [
        (_rough_two_bump(grid), tr.mu_zero, 0.1),
        (gaussian_init(grid, -0.5, 0.3), tr.mu_minus, 0.5),
        (gaussian_init(grid, 0.8, 0.2), gaussian_init(grid, -0.3, 0.6), 1.0),
        (tr.mu_plus, tr.mu_plus, 0.5),
    ]


def test_08_regularization(spec, lam, criterion):
    worst_ratio = -math.inf
    excess = []
    for n in (400, 800):
        g = Grid(4.0, n)
        pos = 0.0
        for mu, nu, t in _regularization_cases(spec, g):
            margin = check_regularization(spec, mu, nu, t, 1e-3, lam)
            worst_ratio = max(worst_ratio, margin / (0.05 * (abs(free_energy(spec, nu)) + 1)))
            pos = max(pos, margin)
        excess.append(pos)
    ok = worst_ratio <= 1.0 and excess[1] <= excess[0] + 1e-12
    criterion(8, "regularization", ok,
              f"max margin / tolerance {worst_ratio:.3f}, positive part {excess[0]:.1e} -> {excess[1]:.1e}")
    assert ok


def test_09_scheme_cross_check(spec, fine_grid, criterion):
    mu = gaussian_init(fine_grid, 0.5, 0.3)
    ref = advance(spec, mu, 0.5, 1e-4)
    gaps = [quantile_gap(ref, jko_flow(spec, mu, tau, 0.5, n_particles=1000)[-1]) for tau in (0.02, 0.01)]
    ratio = gaps[1] / gaps[0]
    ok = 0.35 <= ratio <= 0.65
    criterion(9, "scheme cross-check", ok, f"gap {gaps[0]:.2e} -> {gaps[1]:.2e}, ratio {ratio:.3f}")
    assert ok


def test_10_hbar_landscape(spec, grid, triple, criterion):
    ms = np.linspace(-1.5 * triple.m_star, 1.5 * triple.m_star, 301)
    h = np.array([r[2] for r in hbar_table(spec, ms, grid)])
    d = np.diff(h)
    right = ms[1:] >= 0  # forward differences whose interval ends in [0, end]
    signs = np.sign(d[np.argmax(right):])
    changes = int(np.sum(signs[1:] != signs[:-1]))
    h0, hp, hm = hbar(spec, 0.0, grid), hbar(spec, triple.m_star, grid), hbar(spec, -triple.m_star, grid)
    means = np.linspace(-1.8, 1.8, 10)
    consistency = max(abs(free_energy(spec, _tilted(spec, grid, m)) - hbar(spec, m, grid)) for m in means)
    ok = changes == 2 and h0 > hp and abs(hp - hm) <= 1e-8 and consistency <= 1e-6
    criterion(10, "hbar landscape", ok,
              f"{changes} sign changes, H(0)-H(m*) = {h0 - hp:.4f}, |H(m*)-H(-m*)| = {abs(hp - hm):.1e}, "
              f"max |F - H| = {consistency:.1e}")
    assert ok


def _assignment_w2(x, a, y, b):
    # brute force: integer masses expanded into equal atoms, then an optimal assignment
    xs = np.repeat(x, a)
    ys = np.repeat(y, b)
    cost = np.subtract.outer(xs, ys) ** 2
    r, c = linear_sum_assignment(cost)
    return math.sqrt(math.fsum(cost[r, c]) / xs.size)


def test_11_closed_forms(criterion):
    gauss = make_harmonic(1.0, 1.0, 12.0)
    g = Grid(12.0, 400)
    phi_err = max(abs(log_partition(gauss, s, g) - (s * s / 2 + 0.5 * math.log(2 * math.pi)))
                  for s in (0.0, 1.0, -1.0))
    rng = np.random.default_rng(99)
    total = 60
    w2_err = 0.0
    for _ in range(50):
        n, m = rng.integers(1, 9, size=2)
        a = rng.multinomial(total - n, np.ones(n) / n) + 1
        b = rng.multinomial(total - m, np.ones(m) / m) + 1
        x = np.sort(rng.normal(size=n))
        y = np.sort(rng.normal(size=m))
        w = wasserstein2_atoms(x, a / total, y, b / total)
        w2_err = max(w2_err, abs(w - _assignment_w2(x, a, y, b)))
    ok = phi_err <= 1e-8 and w2_err <= 1e-10
    criterion(11, "closed forms", ok, f"Gaussian log-partition error {phi_err:.1e}, W2 vs assignment {w2_err:.1e}")
    assert ok


def test_12_basin_certificate(spec, grid, triple, lam, criterion):
    nu = _tilted(spec, grid, -0.3)
    cert = basin_certificate(spec, triple, nu, FlowParams(dt=0.05, record_every=1), lam, "minus")
    trials = certificate_sweep(spec, triple, cert, FlowParams(), 50, seed=20240611, threads=4)
    labels = [t["label"] for t in trials]
    ok = (cert.delta > 0 and len(trials) == 50 and labels.count("minus") == 50
          and all(t["radius"] < cert.delta for t in trials))
    criterion(12, "basin certificate", ok,
              f"t' = {cert.t_settle:g}, delta = {cert.delta:.3e}, {labels.count('minus')}/50 perturbations minus")
    assert ok


def test_13_particles(spec, grid, criterion):
    mu0 = gaussian_init(grid, 0.3, 0.5)
    rows = propagation_gap(spec, mu0, [100, 1000, 10000], 2.0, 2e-3, list(range(10)), threads=4)
    med = [r.median for r in rows]
    slope = loglog_slope(rows)
    ok = med[0] > med[1] > med[2] and -0.8 <= slope <= -0.3
    criterion(13, "particles", ok, f"medians {', '.join(f'{m:.3g}' for m in med)}, log-log slope {slope:.3f}")
    assert ok
