"""Run configuration: flat key=value files with '#' comments, or JSON."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

from .measures import GridSpec

__all__ = ["RunConfig", "ConfigError", "load_config"]


class ConfigError(ValueError):
    """Unusable run configuration."""


@dataclass(frozen=True)
class RunConfig:
    mu0_spec: str = "point:0"
    mu1_spec: str = "gaussian:1,1"
    grid: tuple[float, float, int] = (-5.0, 5.0, 201)
    y_grid: tuple[float, float, int] = (-5.0, 7.0, 481)
    sinkhorn_tol: float = 1e-10
    sinkhorn_max_iter: int = 5000
    n_paths: int = 10_000
    n_steps: int = 200
    seed: int = 1
    cost: str = "quadratic"
    control: str = "R"
    mf_term: str = "zero"
    y0: float = 0.0
    horizon: float = 1.0
    perturbations: tuple[str, ...] = ()
    tol_w1: float = 0.02
    tol_entropy_rel: float = 0.05
    tol_gap_abs: float = 0.01
    output_dir: str = "out"
    threads: int | None = None

    def __post_init__(self):
        if self.sinkhorn_tol <= 0:
            raise ConfigError("sinkhorn_tol must be positive")
        if self.n_paths <= 0 or self.n_steps <= 0 or self.sinkhorn_max_iter <= 0:
            raise ConfigError("counts must be positive")
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")

    def x_gridspec(self) -> GridSpec:
        return GridSpec(*self.grid)

    def y_gridspec(self) -> GridSpec:
        return GridSpec(*self.y_grid)

    def config_hash(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def replaced(self, **kwargs) -> "RunConfig":
        data = asdict(self)
        data.update(kwargs)
        data["grid"] = tuple(data["grid"])
        data["y_grid"] = tuple(data["y_grid"])
        data["perturbations"] = tuple(data["perturbations"])
        return RunConfig(**data)


def _parse_grid(text) -> tuple[float, float, int]:
    if isinstance(text, (list, tuple)):
        lo, hi, n = text
    else:
        lo, hi, n = (v.strip() for v in str(text).split(","))
    return float(lo), float(hi), int(n)


def _parse_flat(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


_FIELD_TYPES = {
    "mu0": ("mu0_spec", str),
    "mu1": ("mu1_spec", str),
    "grid": ("grid", _parse_grid),
    "y_grid": ("y_grid", _parse_grid),
    "sinkhorn_tol": ("sinkhorn_tol", float),
    "sinkhorn_max_iter": ("sinkhorn_max_iter", int),
    "n_paths": ("n_paths", int),
    "n_steps": ("n_steps", int),
    "seed": ("seed", int),
    "cost": ("cost", str),
    "control": ("control", str),
    "mf_term": ("mf_term", str),
    "y0": ("y0", float),
    "horizon": ("horizon", float),
    "perturbations": ("perturbations", None),
    "tol_w1": ("tol_w1", float),
    "tol_entropy_rel": ("tol_entropy_rel", float),
    "tol_gap_abs": ("tol_gap_abs", float),
    "output_dir": ("output_dir", str),
    "threads": ("threads", int),
}


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Read a config file (flat key=value or JSON) and apply CLI overrides."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    stripped = text.lstrip()
    raw = json.loads(text) if stripped.startswith("{") else _parse_flat(text)
    kwargs = {}
    for key, value in raw.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        name, conv = _FIELD_TYPES[key]
        if key == "perturbations":
            if isinstance(value, str):
                items = [v.strip() for v in value.replace(";", ",").split(",") if v.strip()]
            else:
                items = [str(v) for v in value]
            kwargs[name] = tuple(items)
        else:
            try:
                kwargs[name] = conv(value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key!r}: {value!r} ({exc})") from exc
    if overrides:
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
