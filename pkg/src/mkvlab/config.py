"""Strict JSON run configuration.

Every section is a dataclass; unknown keys, wrong types and out-of-range
values raise :class:`ConfigError` before any computation starts.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

from .flow import FlowParams
from .measure import Grid
from .potential import FAMILIES, make_potential


class ConfigError(ValueError):
    pass


def _number(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{name} must be a number, got {v!r}")
    return float(v)


def _integer(v, name):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    return v


def _build(cls, data, where):
    """Instantiate a flat dataclass from a dict, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    extra = sorted(set(data) - set(fields))
    if extra:
        raise ConfigError(f"unknown keys in {where}: {extra}")
    kwargs = {}
    for name, f in fields.items():
        if name not in data:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(f"missing key {where}.{name}")
            continue
        v = data[name]
        kind = f.type if isinstance(f.type, str) else f.type.__name__
        label = f"{where}.{name}"
        if kind == "float":
            v = _number(v, label)
        elif kind == "int":
            v = _integer(v, label)
        elif kind == "bool":
            if not isinstance(v, bool):
                raise ConfigError(f"{label} must be true or false")
        elif kind == "str":
            if not isinstance(v, str):
                raise ConfigError(f"{label} must be a string")
        elif kind.startswith("list"):
            if not isinstance(v, list):
                raise ConfigError(f"{label} must be a list")
            inner = kind[5:-1]
            conv = _integer if inner == "int" else _number
            v = [conv(x, label) for x in v]
        kwargs[name] = v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass(frozen=True)
class GridConfig:
    half_width: float = 4.0
    n: int = 400


@dataclass(frozen=True)
class CheckConfig:
    n_samples: int = 2001
    tol: float = 1e-10


@dataclass(frozen=True)
class HbarConfig:
    n_points: int = 301
    span: float = 1.5


@dataclass(frozen=True)
class SweepConfig:
    means: list[float] = field(default_factory=lambda: [-1.0, -0.5, 0.0, 0.5, 1.0])
    vars: list[float] = field(default_factory=lambda: [0.2, 0.4, 0.6])
    max_escape: float = 1e-4


@dataclass(frozen=True)
class CertificateConfig:
    eta: float = -0.3
    n_trials: int = 50
    record_dt: float = 0.05


@dataclass(frozen=True)
class ParticleConfig:
    n_list: list[int] = field(default_factory=lambda: [100, 1000, 10000])
    dt: float = 2e-3
    t_end: float = 2.0
    n_seeds: int = 10
    pde_dt: float = 1e-3
    write_positions: bool = False
    max_positions: int = 100_000


INITIAL_KINDS = {
    "gaussian": {"mean", "var"},
    "tilted": {"eta"},
    "stationary": {"which"},
    "bimodal": {"center", "var"},
}


@dataclass(frozen=True)
class RunConfig:
    potential: dict
    j: float
    grid: GridConfig
    flow: FlowParams
    seed: int | None = None
    output_dir: str = "mkv_out"
    check: CheckConfig = CheckConfig()
    hbar: HbarConfig = HbarConfig()
    initial: dict | None = None
    sweep: SweepConfig = SweepConfig()
    certificate: CertificateConfig = CertificateConfig()
    particles: ParticleConfig = ParticleConfig()
    snapshot_every: int = 0
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def make_spec(self):
        params = {k: v for k, v in self.potential.items() if k != "family"}
        return make_potential(self.potential["family"], self.j, self.grid.half_width, **params)

    def make_grid(self):
        return Grid(self.grid.half_width, self.grid.n)

    @property
    def sha256(self):
        return config_hash(self.raw)


def config_hash(raw):
    return hashlib.sha256(canonical_json(raw).encode()).hexdigest()


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


TOP_KEYS = {
    "potential", "j", "grid", "flow", "seed", "output_dir", "check", "hbar",
    "initial", "sweep", "certificate", "particles", "snapshot_every",
}


def _potential(data):
    if not isinstance(data, dict) or "family" not in data:
        raise ConfigError("potential must be an object with a 'family' key")
    fam = data["family"]
    if fam not in FAMILIES:
        raise ConfigError(f"unknown potential family {fam!r}; choose from {sorted(FAMILIES)}")
    names = set(FAMILIES[fam][1])
    extra = sorted(set(data) - names - {"family"})
    missing = sorted(names - set(data))
    if extra or missing:
        raise ConfigError(f"potential {fam!r}: unknown keys {extra}, missing keys {missing}")
    out = {"family": fam}
    for k in names:
        v = data[k]
        if isinstance(v, list):
            out[k] = [_number(x, f"potential.{k}") for x in v]
        else:
            out[k] = _number(v, f"potential.{k}")
    return out


def _initial(data):
    if data is None:
        return None
    if not isinstance(data, dict) or data.get("kind") not in INITIAL_KINDS:
        raise ConfigError(f"initial.kind must be one of {sorted(INITIAL_KINDS)}")
    need = INITIAL_KINDS[data["kind"]]
    keys = set(data) - {"kind"}
    if keys != need:
        raise ConfigError(f"initial of kind {data['kind']!r} takes keys {sorted(need)}, got {sorted(keys)}")
    out = dict(data)
    for k in need - {"which"}:
        out[k] = _number(data[k], f"initial.{k}")
    if "which" in need and data["which"] not in ("minus", "zero", "plus"):
        raise ConfigError("initial.which must be minus, zero or plus")
    return out


def parse_config(raw):
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    extra = sorted(set(raw) - TOP_KEYS)
    if extra:
        raise ConfigError(f"unknown top-level keys: {extra}")
    for key in ("potential", "j", "grid"):
        if key not in raw:
            raise ConfigError(f"missing key {key}")
    j = _number(raw["j"], "j")
    if not j > 0:
        raise ConfigError("j must be positive")
    seed = raw.get("seed")
    if seed is not None:
        seed = _integer(seed, "seed")
        if seed < 0:
            raise ConfigError("seed must be nonnegative")
    out_dir = raw.get("output_dir", "mkv_out")
    if not isinstance(out_dir, str):
        raise ConfigError("output_dir must be a string")
    snap = _integer(raw.get("snapshot_every", 0), "snapshot_every")
    if snap < 0:
        raise ConfigError("snapshot_every must be nonnegative")
    flow_raw = raw.get("flow", {})
    if isinstance(flow_raw, dict) and "lam" in flow_raw:
        raise ConfigError("flow.lam is derived from the potential and cannot be set")
    cfg = RunConfig(
        potential=_potential(raw["potential"]),
        j=j,
        grid=_build(GridConfig, raw["grid"], "grid"),
        flow=_build(FlowParams, flow_raw, "flow"),
        seed=seed,
        output_dir=out_dir,
        check=_build(CheckConfig, raw.get("check", {}), "check"),
        hbar=_build(HbarConfig, raw.get("hbar", {}), "hbar"),
        initial=_initial(raw.get("initial")),
        sweep=_build(SweepConfig, raw.get("sweep", {}), "sweep"),
        certificate=_build(CertificateConfig, raw.get("certificate", {}), "certificate"),
        particles=_build(ParticleConfig, raw.get("particles", {}), "particles"),
        snapshot_every=snap,
        raw=raw,
    )
    _validate(cfg)
    return cfg


def _validate(cfg):
    try:
        cfg.make_grid()
        cfg.make_spec()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.grid.half_width <= 0:
        raise ConfigError("grid.half_width must be positive")
    if cfg.check.n_samples < 100:
        raise ConfigError("check.n_samples must be at least 100")
    if cfg.hbar.n_points < 3 or not cfg.hbar.span > 0:
        raise ConfigError("hbar needs n_points >= 3 and span > 0")
    if len(cfg.sweep.means) == 0 or len(cfg.sweep.vars) == 0:
        raise ConfigError("sweep needs at least one mean and one variance")
    if any(v <= 0 for v in cfg.sweep.vars):
        raise ConfigError("sweep variances must be positive")
    p = cfg.particles
    if any(n < 2 for n in p.n_list) or any(b <= a for a, b in zip(p.n_list, p.n_list[1:])):
        raise ConfigError("particles.n_list must be increasing with entries >= 2")
    if not (p.dt > 0 and p.t_end >= 0 and p.pde_dt > 0 and p.n_seeds >= 1):
        raise ConfigError("particles needs dt > 0, t_end >= 0, pde_dt > 0, n_seeds >= 1")
    c = cfg.certificate
    if c.eta == 0 or c.n_trials < 0 or not c.record_dt > 0:
        raise ConfigError("certificate needs eta != 0, n_trials >= 0, record_dt > 0")


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return parse_config(raw)
