"""Experiment configuration: flat ``key = value`` text with ``#`` comments.

Unknown keys and malformed values are rejected with the offending line
number. Defaults depend on the experiment and follow the physical setups of
the reference experiments (sphere: k0 = 3, eps_r = 2.1; kite and Fichera:
k0 = 5, eps_r = 1.9).
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

EXPERIMENTS = ("sphere-convergence", "kite-foa", "kite-uq", "fichera-uq", "custom")


class ConfigError(ValueError):
    pass


_KITE_D = tuple(float(x) / 14**0.5 for x in (1, 2, 3))
_KITE_P = (1j, 2 + 0j, -1 - 1j / 3)

_DEFAULTS = {
    "sphere-convergence": dict(
        k0=3.0, eps_r=2.1, direction=(1.0, 0.0, 0.0), polarization=(0j, 0j, 1 + 0j),
        levels=(2.0, 5.0, 10.0), n_angles=1801, tol=1e-8, shape="sphere", component="z",
    ),
    "kite-foa": dict(levels=(10.0,), t=(1.0, 0.5, 0.25, 0.1), shape="kite"),
    "kite-uq": dict(levels=(2.0, 5.0, 10.0), t=(0.05,), shape="kite", model="kite-rank1"),
    "fichera-uq": dict(levels=(2.0, 5.0, 10.0), t=(0.05,), shape="fichera", model="fichera-splines"),
    "custom": dict(),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    problem: str = "de"
    shape: str = "sphere"
    k0: float = 5.0
    eps_r: float = 1.9
    mu_r: float = 1.0
    direction: tuple = _KITE_D
    polarization: tuple = _KITE_P
    levels: tuple = (2.0, 5.0, 10.0)
    L0: int = 0
    t: tuple = (0.05,)
    n_angles: int = 400
    tol: float = 1e-6
    max_iter: int = 5000
    linear_solver: str = "direct"
    model: str = "kite-rank1"
    component: str = "y"
    mc_runs: int = 100
    mc_level: Optional[float] = None
    seed: int = 0
    singular_order: int = 5
    out: str = "results"

    def validate(self) -> "ExperimentConfig":
        def bad(key, msg):
            raise ConfigError(f"{key}: {msg}")

        if self.experiment not in EXPERIMENTS:
            bad("experiment", f"must be one of {', '.join(EXPERIMENTS)}")
        if self.problem not in ("pec", "de"):
            bad("problem", "must be 'pec' or 'de'")
        if self.shape not in ("sphere", "kite", "fichera"):
            bad("shape", "must be sphere, kite or fichera")
        for key in ("k0", "eps_r", "mu_r", "tol"):
            if not getattr(self, key) > 0:
                bad(key, "must be positive")
        if len(self.direction) != 3 or len(self.polarization) != 3:
            bad("direction", "direction and polarization need three components")
        if not self.levels or any(r <= 0 for r in self.levels):
            bad("levels", "need at least one positive precision")
        if list(self.levels) != sorted(self.levels):
            bad("levels", "precisions must increase")
        if not (0 <= self.L0 < len(self.levels)):
            bad("L0", "out of range for the level list")
        if any(t < 0 for t in self.t) or not self.t:
            bad("t", "amplitudes must be non-negative")
        if self.n_angles < 2:
            bad("n_angles", "need at least two angles")
        if self.linear_solver not in ("gmres", "direct"):
            bad("linear_solver", "must be 'gmres' or 'direct'")
        if self.model not in ("kite-rank1", "fichera-splines"):
            bad("model", "unknown covariance model")
        if self.component not in ("x", "y", "z"):
            bad("component", "must be x, y or z")
        if self.mc_runs < 0 or self.mc_runs == 1:
            bad("mc_runs", "need at least two runs (0 skips Monte Carlo)")
        if self.singular_order < 2:
            bad("singular_order", "must be at least 2")
        return self

    @property
    def component_index(self) -> int:
        return "xyz".index(self.component)

    @property
    def wave_direction(self) -> np.ndarray:
        d = np.asarray(self.direction, dtype=float)
        return d / np.linalg.norm(d)

    def hash(self) -> str:
        """Digest of everything except the output directory."""
        return hashlib.sha256(serialize(replace(self, out="")).encode()).hexdigest()[:12]


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _parse_complex(tok: str) -> complex:
    return complex(tok.strip().replace(" ", "").replace("i", "j"))


def _parse_value(key: str, raw: str):
    f = _FIELDS[key]
    raw = raw.strip()
    default = f.default
    if key in ("direction",):
        return tuple(float(x) for x in raw.split(","))
    if key == "polarization":
        return tuple(_parse_complex(x) for x in raw.split(","))
    if key in ("levels", "t"):
        return tuple(float(x) for x in raw.split(","))
    if key == "mc_level":
        return None if raw.lower() in ("", "none") else float(raw)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_text(text: str) -> ExperimentConfig:
    values = {}
    seen = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (x.strip() for x in s.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first on line {seen[key]})")
        seen[key] = lineno
        if key == "experiment":
            if not raw:
                raise ConfigError(f"line {lineno}: experiment: value is empty")
            values[key] = raw
            continue
        try:
            values[key] = _parse_value(key, raw)
        except ValueError as e:
            raise ConfigError(f"line {lineno}: {key}: cannot parse {raw!r} ({e})") from None
    if not values.get("experiment"):
        raise ConfigError("experiment: missing or empty")
    exp = values["experiment"]
    if exp not in EXPERIMENTS:
        raise ConfigError(f"line {seen['experiment']}: experiment: must be one of {', '.join(EXPERIMENTS)}")
    merged = dict(_DEFAULTS[exp])
    merged.update(values)
    return ExperimentConfig(**merged).validate()


def parse_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_text(p.read_text())


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, complex):
        return repr(v).strip("()")
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize(cfg: ExperimentConfig) -> str:
    return "".join(f"{f.name} = {_fmt(getattr(cfg, f.name))}\n" for f in fields(cfg))


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None}).validate()
