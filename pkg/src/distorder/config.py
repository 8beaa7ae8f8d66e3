"""Experiment configuration: TOML (or JSON) files validated against a fixed schema.

Every section and key is declared below with its type and default; unknown
keys are rejected before any solve. ``ExperimentConfig`` turns the validated
mapping into solver objects.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import tomli

from .expr import ParseError, parse
from .fem1d import BoundarySpec
from .forward import ProblemSpec
from .fracweights import TimeGrid, WeightDistribution
from .inverse import CGMOptions

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "SCHEMA"]


class ConfigError(ValueError):
    pass


_NUM = (int, float)
_OPT_NUM = (int, float, type(None))

# section -> key -> (accepted types, default)
SCHEMA = {
    "problem": {
        "M": (int, 64),
        "bc": (str, "dirichlet"),
        "bc_left": (str, "0"),
        "bc_right": (str, "0"),
        "a": (str, "1"),
        "q": (str, "0"),
        "u0": (str, "0"),
        "f": (str, "0"),
        "sigma": (str, "1"),
        "source_cutoff": (_OPT_NUM, None),
    },
    "weight": {
        "mode": (str, "indicator"),
        "name": (str, ""),
        "expr": (str, ""),
        "b1": (_NUM, 0.2),
        "b2": (_NUM, 0.8),
        "atoms": (list, []),
    },
    "weights": {},  # optional array of [weight]-shaped tables for sweeps
    "time": {
        "kind": (str, "uniform"),
        "T": (_NUM, 1.0),
        "N": (int, 100),
        "t_min": (_NUM, 1e-8),
        "per_decade": (int, 40),
    },
    "alpha": {"n_alpha": (int, 128)},
    "observe": {"x0": (_NUM, 0.0), "kind": (str, "")},
    "noise": {"eps": (_NUM, 0.0), "seed": (int, 0)},
    "recover": {
        "mode": (str, "cgm"),
        "upper_window": (list, [1e-6, 1e-5]),
        "lower_window": (list, [1e4, 1e5]),
        "small_t_min": (_NUM, 1e-12),
        "small_T": (_NUM, 1e-4),
        "large_t_min": (_NUM, 1e-8),
        "large_T": (_NUM, 1e5),
        "per_decade": (int, 40),
        "anchor": (bool, True),
        "n_alpha": (int, 50),
        "k_max": (int, 100),
        "tau_dp": (_NUM, 1.1),
        "stop": (str, "discrepancy"),
        "gamma": (str, "smoothed"),
        "smooth": (bool, True),
        "initial": (str, "sin(pi*alpha)/100"),
        "data": (str, ""),
    },
    "asymptotics": {
        "times": (list, [1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e2, 1e3, 1e4, 1e5, 1e6]),
        "small_constant": (_NUM, 1.0),
        "large_constant": (_NUM, 1.0),
        "delta": (_NUM, 1.0),
        "theta": (_OPT_NUM, None),
    },
    "gradcheck": {
        "M": (int, 32),
        "N": (int, 64),
        "n_alpha": (int, 16),
        "directions": (int, 5),
        "fd_step": (_NUM, 1e-4),
    },
    "output": {"dir": (str, "out")},
}

_WEIGHT_MODES = ("indicator", "expr", "atoms")


def _check_type(path: str, value, types):
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ConfigError(f"{path}: expected {types}, got bool")
    if not isinstance(value, types):
        raise ConfigError(f"{path}: expected {types}, got {type(value).__name__}")


def _fill_section(name: str, raw: dict, schema: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"[{name}]: unknown keys {unknown}")
    out = {}
    for key, (types, default) in schema.items():
        if key in raw:
            _check_type(f"{name}.{key}", raw[key], types)
            out[key] = raw[key]
        else:
            out[key] = copy.deepcopy(default)
    return out


def validate(raw: dict) -> dict:
    """Schema check plus semantic checks; returns a fully populated mapping."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a table")
    unknown = sorted(set(raw) - set(SCHEMA))
    if unknown:
        raise ConfigError(f"unknown sections {unknown}")
    cfg = {}
    for sec, schema in SCHEMA.items():
        if sec == "weights":
            continue
        cfg[sec] = _fill_section(sec, raw.get(sec, {}), schema)
    sweep = raw.get("weights", [])
    if not isinstance(sweep, list):
        raise ConfigError("[[weights]] must be an array of tables")
    cfg["weights"] = [_fill_section(f"weights[{i}]", w, SCHEMA["weight"]) for i, w in enumerate(sweep)]

    p = cfg["problem"]
    if p["bc"] not in ("dirichlet", "neumann"):
        raise ConfigError(f"problem.bc: unknown kind {p['bc']!r}")
    if p["M"] < 2:
        raise ConfigError("problem.M must be at least 2")
    for key in ("bc_left", "bc_right", "a", "q", "u0", "f", "sigma"):
        _check_expr(f"problem.{key}", p[key])
    for w in [cfg["weight"]] + cfg["weights"]:
        _check_weight(w)
    t = cfg["time"]
    if t["kind"] not in ("uniform", "geometric"):
        raise ConfigError(f"time.kind: unknown grid kind {t['kind']!r}")
    if t["T"] <= 0 or t["N"] < 1 or t["t_min"] <= 0 or t["per_decade"] < 1:
        raise ConfigError("time: T, N, t_min and per_decade must be positive")
    if cfg["alpha"]["n_alpha"] < 2:
        raise ConfigError("alpha.n_alpha must be at least 2")
    if cfg["observe"]["x0"] not in (0, 1, 0.0, 1.0):
        raise ConfigError("observe.x0 must be 0 or 1")
    dual = "conormal_flux" if p["bc"] == "dirichlet" else "dirichlet"
    if cfg["observe"]["kind"] not in ("", dual):
        raise ConfigError(f"observe.kind: a {p['bc']} problem is observed through {dual}")
    if cfg["noise"]["eps"] < 0:
        raise ConfigError("noise.eps must be nonnegative")
    r = cfg["recover"]
    if r["mode"] not in ("bounds", "cgm"):
        raise ConfigError(f"recover.mode: unknown mode {r['mode']!r}")
    for key in ("upper_window", "lower_window"):
        w = r[key]
        if len(w) != 2 or not all(isinstance(v, _NUM) for v in w) or not 0 < w[0] < w[1]:
            raise ConfigError(f"recover.{key} must be [t1, t2] with 0 < t1 < t2")
    if r["stop"] not in ("discrepancy", "none") or r["gamma"] not in ("smoothed", "literal", "zero"):
        raise ConfigError("recover.stop or recover.gamma has an unknown value")
    _check_expr("recover.initial", r["initial"])
    a = cfg["asymptotics"]
    if not a["times"] or not all(isinstance(v, _NUM) and v > 0 for v in a["times"]):
        raise ConfigError("asymptotics.times must be a nonempty list of positive numbers")
    return cfg


def _check_expr(path: str, src: str):
    try:
        parse(src)
    except ParseError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _check_weight(w: dict):
    if w["mode"] not in _WEIGHT_MODES:
        raise ConfigError(f"weight.mode: unknown mode {w['mode']!r}")
    if w["mode"] == "indicator" and not 0 <= w["b1"] < w["b2"] <= 1:
        raise ConfigError("weight: need 0 <= b1 < b2 <= 1")
    if w["mode"] == "expr":
        if not w["expr"]:
            raise ConfigError("weight.expr is required for mode 'expr'")
        _check_expr("weight.expr", w["expr"])
    if w["mode"] == "atoms":
        if not w["atoms"] or not all(isinstance(a, list) and len(a) == 2 for a in w["atoms"]):
            raise ConfigError("weight.atoms must be a list of [alpha, mass] pairs")


def load_config(path) -> "ExperimentConfig":
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        if path.suffix == ".json":
            raw = json.loads(text)
        else:
            raw = tomli.loads(text.decode("utf-8"))
    except (tomli.TOMLDecodeError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ExperimentConfig(validate(raw))


def build_weight(w: dict) -> WeightDistribution:
    name = w["name"]
    if w["mode"] == "indicator":
        return WeightDistribution.indicator(float(w["b1"]), float(w["b2"]), name=name)
    if w["mode"] == "atoms":
        return WeightDistribution.from_atoms(w["atoms"], name=name)
    return WeightDistribution.from_expr(w["expr"], name=name)


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict

    @property
    def seed(self) -> int:
        return int(self.data["noise"]["seed"])

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        if seed is None:
            return self
        d = copy.deepcopy(self.data)
        d["noise"]["seed"] = int(seed)
        return ExperimentConfig(d)

    def digest(self) -> str:
        blob = json.dumps(self.data, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def weight(self) -> WeightDistribution:
        return build_weight(self.data["weight"])

    def sweep(self) -> list:
        ws = self.data["weights"] or [self.data["weight"]]
        return [build_weight(w) for w in ws]

    def grid(self) -> TimeGrid:
        t = self.data["time"]
        if t["kind"] == "uniform":
            return TimeGrid.uniform(float(t["T"]), int(t["N"]))
        return TimeGrid.geometric(float(t["t_min"]), float(t["T"]), int(t["per_decade"]))

    def bc(self) -> BoundarySpec:
        p = self.data["problem"]
        ctor = BoundarySpec.dirichlet if p["bc"] == "dirichlet" else BoundarySpec.neumann
        return ctor(p["bc_left"], p["bc_right"])

    def problem(self, mu: WeightDistribution | None = None, grid: TimeGrid | None = None,
                n_alpha: int | None = None) -> ProblemSpec:
        p = self.data["problem"]
        cut = p["source_cutoff"]
        return ProblemSpec.build(
            M=int(p["M"]), a=p["a"], q=p["q"], bc=self.bc(), u0=p["u0"], f=p["f"],
            sigma=p["sigma"], mu=mu or self.weight(), grid=grid or self.grid(),
            x0=float(self.data["observe"]["x0"]),
            source_cutoff=None if cut is None else float(cut),
            n_alpha=int(n_alpha or self.data["alpha"]["n_alpha"]),
        )

    def cgm_options(self) -> CGMOptions:
        r = self.data["recover"]
        return CGMOptions(
            n_alpha=int(r["n_alpha"]), k_max=int(r["k_max"]), tau_dp=float(r["tau_dp"]),
            eps=float(self.data["noise"]["eps"]), stop=r["stop"], gamma=r["gamma"],
            smooth=bool(r["smooth"]), initial=r["initial"],
        )
