"""Command-line entry point: ``mkvlab <command> --config run.json``.

Each command writes its data files plus ``manifest.json`` (embedded config,
its hash, library versions, wall time and a SHA-256 per emitted file) into
the output directory. Data files depend only on the config, so reruns are
byte-identical; timing lives in the manifest alone.

Exit codes: 0 success, 1 failed assumption audit or runtime error,
2 invalid configuration. Failures also write ``error.json``.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import platform
import sys
import time
import traceback

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, canonical_json, load_config
from .ergodicity import (
    basin_certificate, basin_sweep, certificate_sweep, classify, small_basin_predict,
    sweep_csv, symmetric_bimodal,
)
from .flow import evolve, lambda_bound, trajectory_csv
from .measure import from_samples, gaussian_init, to_csv, to_mkv1
from .particles import loglog_slope, propagation_gap, simulate
from .potential import check_assumptions
from .tilt import hbar_table, hbar_table_csv, legendre, stationary_triple, tilted_measure

log = logging.getLogger("mkvlab")

COMMANDS = ("check", "stationary", "hbar", "flow", "classify", "basin-sweep", "certificate", "particles")


class ClauseFailure(RuntimeError):
    pass


def _json(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def _fmt(x):
    return f"{x:.17g}"


class Output:
    """Collects emitted files so the manifest can hash them."""

    def __init__(self, root):
        self.root = root
        self.files = {}
        os.makedirs(root, exist_ok=True)

    def write(self, name, data):
        path = os.path.join(self.root, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        raw = data.encode() if isinstance(data, str) else data
        with open(path, "wb") as fh:
            fh.write(raw)
        self.files[name] = hashlib.sha256(raw).hexdigest()


def _audit(cfg, spec):
    return check_assumptions(spec, cfg.check.n_samples, cfg.check.tol)


def _require_audit(cfg, spec):
    report = _audit(cfg, spec)
    if not report.all_pass:
        raise ClauseFailure(f"assumption clauses failed: {report.failed()}")
    return report


def _initial_measure(cfg, spec, grid, triple):
    ini = cfg.initial
    if ini is None:
        raise ConfigError("this command needs an 'initial' section")
    kind = ini["kind"]
    if kind == "gaussian":
        try:
            return gaussian_init(grid, ini["mean"], ini["var"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if kind == "tilted":
        return tilted_measure(spec, legendre(spec, ini["eta"], grid).dphi, grid)
    if kind == "stationary":
        return triple.measures()[ini["which"]]
    try:
        return symmetric_bimodal(grid, ini["center"], ini["var"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _need_seed(cfg):
    if cfg.seed is None:
        raise ConfigError("this command is stochastic and needs a 'seed'")
    return cfg.seed


def cmd_check(cfg, out, threads):
    report = _audit(cfg, cfg.make_spec())
    out.write("report.json", _json(report.to_dict()))
    if not report.all_pass:
        raise ClauseFailure(f"assumption clauses failed: {report.failed()}")


def cmd_stationary(cfg, out, threads):
    spec = cfg.make_spec()
    _require_audit(cfg, spec)
    tr = stationary_triple(spec, cfg.make_grid())
    out.write("stationary.json", _json(tr.to_dict()))
    for name, mu in tr.measures().items():
        out.write(f"mu_{name}.mkv1", to_mkv1(mu))
        out.write(f"mu_{name}.csv", to_csv(mu))


def cmd_hbar(cfg, out, threads):
    spec = cfg.make_spec()
    _require_audit(cfg, spec)
    grid = cfg.make_grid()
    tr = stationary_triple(spec, grid)
    top = cfg.hbar.span * tr.m_star
    ms = np.linspace(-top, top, cfg.hbar.n_points)
    rows = hbar_table(spec, ms, grid)
    out.write("hbar.csv", hbar_table_csv(rows))
    h = np.array([r[2] for r in rows])
    k = int(np.argmin(h))
    out.write("hbar_summary.json", _json({
        "m_star": tr.m_star, "argmin": float(ms[k]), "min": float(h[k]),
        "hbar_zero": legendre(spec, 0.0, grid).phi, "m_step": float(ms[1] - ms[0]),
    }))


def _snapshots(out, traj, every):
    if every <= 0:
        return
    for i, s in enumerate(traj.states[::every]):
        out.write(f"snapshots/state_{i * every:06d}.mkv1", to_mkv1(s.measure))


def cmd_flow(cfg, out, threads):
    spec = cfg.make_spec()
    _require_audit(cfg, spec)
    grid = cfg.make_grid()
    tr = stationary_triple(spec, grid)
    mu0 = _initial_measure(cfg, spec, grid, tr)
    traj = evolve(spec, mu0, cfg.flow)
    out.write("trajectory.csv", trajectory_csv(traj, tr))
    out.write("flow.json", _json({
        "status": traj.status, "t_final": traj.final.t, "energy_final": traj.final.energy,
        "mean_final": traj.final.mean, "records": len(traj.states),
        "speeds": [float(v) for v in traj.speeds],
    }))
    _snapshots(out, traj, cfg.snapshot_every)


def cmd_classify(cfg, out, threads):
    spec = cfg.make_spec()
    _require_audit(cfg, spec)
    grid = cfg.make_grid()
    tr = stationary_triple(spec, grid)
    mu0 = _initial_measure(cfg, spec, grid, tr)
    res = classify(spec, tr, mu0, cfg.flow, keep_trajectory=True)
    pred = small_basin_predict(spec, tr, mu0)
    out.write("classification.json", _json({
        "label": res.label, "status": res.status, "t_final": res.t_final,
        "energy_final": res.energy, "distances": res.distances, "reason": res.reason,
        "small_basin": {"applicable": pred.applicable, "predicted": pred.predicted},
    }))
    out.write("trajectory.csv", trajectory_csv(res.trajectory, tr))
    _snapshots(out, res.trajectory, cfg.snapshot_every)


def cmd_basin_sweep(cfg, out, threads):
    spec = cfg.make_spec()
    _require_audit(cfg, spec)
    tr = stationary_triple(spec, cfg.make_grid())
    pairs = [(m, v) for m in cfg.sweep.means for v in cfg.sweep.vars]
    rows = basin_sweep(spec, tr, pairs, cfg.flow, threads, cfg.sweep.max_escape)
    out.write("sweep.csv", sweep_csv(rows))


def cmd_certificate(cfg, out, threads):
    seed = _need_seed(cfg)
    spec = cfg.make_spec()
    report = _require_audit(cfg, spec)
    grid = cfg.make_grid()
    tr = stationary_triple(spec, grid)
    lam = lambda_bound(spec, report)
    c = cfg.certificate
    nu = tilted_measure(spec, legendre(spec, c.eta, grid).dphi, grid)
    target = "minus" if c.eta < 0 else "plus"
    anchor = classify(spec, tr, nu, cfg.flow)
    if anchor.label != target:
        raise RuntimeError(f"anchor classifies {anchor.label}, expected {target}")
    rec = cfg.flow.__class__(dt=c.record_dt, t_max=cfg.flow.t_max, record_every=1)
    cert = basin_certificate(spec, tr, nu, rec, lam, target)
    trials = certificate_sweep(spec, tr, cert, cfg.flow, c.n_trials, seed, threads)
    body = cert.to_dict()
    body["eta"] = c.eta
    body["trials"] = trials
    body["all_trials_match"] = all(t["label"] == target for t in trials)
    out.write("certificate.json", _json(body))


def cmd_particles(cfg, out, threads):
    seed = _need_seed(cfg)
    spec = cfg.make_spec()
    _require_audit(cfg, spec)
    grid = cfg.make_grid()
    tr = stationary_triple(spec, grid)
    mu0 = _initial_measure(cfg, spec, grid, tr)
    p = cfg.particles
    seeds = [seed + i for i in range(p.n_seeds)]
    rows = propagation_gap(spec, mu0, p.n_list, p.t_end, p.dt, seeds, p.pde_dt, threads)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "median_w2"] + [f"seed_{s}" for s in seeds])
    for r in rows:
        w.writerow([r.n, _fmt(r.median)] + [_fmt(g) for g in r.gaps])
    out.write("propagation.csv", buf.getvalue())
    summary = {"slope": loglog_slope(rows) if len(rows) > 1 else None, "seeds": seeds}
    out.write("propagation.json", _json(summary))
    if p.write_positions:
        n = p.n_list[-1]
        if n > p.max_positions:
            raise ConfigError(f"refusing to write {n} positions (max_positions={p.max_positions})")
        ens = simulate(spec, mu0, n, p.dt, p.t_end, seed)[-1]
        out.write("positions.csv", "x\n" + "".join(_fmt(x) + "\n" for x in ens.x))
        out.write("positions_binned.mkv1", to_mkv1(from_samples(grid, ens.x)))


HANDLERS = {
    "check": cmd_check, "stationary": cmd_stationary, "hbar": cmd_hbar, "flow": cmd_flow,
    "classify": cmd_classify, "basin-sweep": cmd_basin_sweep,
    "certificate": cmd_certificate, "particles": cmd_particles,
}


def _threads(arg):
    if arg is not None:
        return arg
    env = os.environ.get("MKV_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"MKV_THREADS must be an integer, got {env!r}") from None
    return 1


def build_parser():
    ap = argparse.ArgumentParser(prog="mkvlab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, metavar="PATH")
    ap.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
    ap.add_argument("--threads", type=int, metavar="N", help="worker threads (default: MKV_THREADS or 1)")
    return ap


def _manifest(command, cfg, out, wall):
    return {
        "command": command,
        "config": cfg.raw,
        "config_sha256": cfg.sha256,
        "config_canonical": canonical_json(cfg.raw),
        "versions": {
            "mkvlab": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__,
        },
        "wall_time_s": wall,
        "files": dict(sorted(out.files.items())),
    }


def _write_error(root, kind, exc, code):
    body = {"error": kind, "message": str(exc), "exit_code": code}
    text = _json(body)
    if root:
        try:
            os.makedirs(root, exist_ok=True)
            with open(os.path.join(root, "error.json"), "w") as fh:
                fh.write(text)
        except OSError:
            pass
    sys.stderr.write(text)


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    root = args.out
    t0 = time.perf_counter()
    try:
        threads = _threads(args.threads)
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config)
        root = args.out or cfg.output_dir
        out = Output(root)
        HANDLERS[args.command](cfg, out, threads)
    except ConfigError as exc:
        _write_error(root, "config", exc, 2)
        return 2
    except ClauseFailure as exc:
        _write_error(root, "assumptions", exc, 1)
        if args.command == "check":
            out.write("manifest.json", _json(_manifest(args.command, cfg, out, time.perf_counter() - t0)))
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as machine-readable error
        log.debug("%s", traceback.format_exc())
        _write_error(root, type(exc).__name__, exc, 1)
        return 1
    out.write("manifest.json", _json(_manifest(args.command, cfg, out, time.perf_counter() - t0)))
    return 0


if __name__ == "__main__":
    sys.exit(main())
