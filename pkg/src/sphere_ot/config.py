"""Flat ``key = value`` run configuration shared by the command line and the API.

Precedence is defaults < config file < command-line flags. The effective
configuration is echoed into every output file together with a SHA-256
hash of its canonical text, so runs can be matched to their settings.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .cost import CostModel
from .exceptions import ConfigError, FileParse
from .solver import SolverConfig


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if str(text).strip().lower() in ("", "none", "auto") else float(text)


@dataclass(frozen=True)
class RunConfig:
    cloud: str = "icosahedral"
    n: int = 642
    alpha: float = 0.5
    C_r: float = 2.0
    cost: str = "squared"
    R: float | None = None
    map_convention: str = "full"
    f1: str = "uniform"
    f2: str = "uniform"
    tol: float | None = None
    max_iters: int = 500
    max_outer: int = 50
    damping: float = 1.0
    renormalize_f2: bool = False
    tau_constant: float = 0.5
    delta_mode: str = "zero"
    n_pairs: int = 8
    potential: str = "zonal_linear"
    eps: float = 0.2
    levels: int = 3
    trials: int = 10_000
    seed: int = 0
    threads: int | None = None

    def cost_model(self):
        return CostModel(self.cost, self.R, map_convention=self.map_convention)

    def solver_config(self, **extra):
        return SolverConfig(tau_constant=self.tau_constant, delta_mode=self.delta_mode, n_pairs=self.n_pairs,
                            tol=self.tol, max_newton=self.max_iters, max_outer=self.max_outer,
                            damping=self.damping, renormalize_f2=self.renormalize_f2, **extra)

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def text(self):
        return "\n".join(f"{k} = {'' if v is None else v}" for k, v in self.items())

    def digest(self):
        return hashlib.sha256(self.text().encode()).hexdigest()

    def update(self, values):
        """Return a copy with ``values`` (strings or typed) applied."""
        conv = {}
        for k, v in values.items():
            if v is None:
                continue
            key = k.replace("-", "_")
            if key not in _PARSERS:
                raise ConfigError(f"unknown config key {k!r}; valid keys: {', '.join(_PARSERS)}")
            try:
                conv[key] = _PARSERS[key](v) if isinstance(v, str) else v
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        return replace(self, **conv)


_PARSERS = {
    "cloud": str, "n": int, "alpha": float, "C_r": float, "cost": str, "R": _opt_float,
    "map_convention": str, "f1": str, "f2": str, "tol": _opt_float, "max_iters": int, "max_outer": int,
    "damping": float, "renormalize_f2": _bool, "tau_constant": float, "delta_mode": str, "n_pairs": int,
    "potential": str, "eps": float, "levels": int, "trials": int, "seed": int,
    "threads": lambda t: None if str(t).strip().lower() in ("", "none") else int(t),
}


def read_config_file(path):
    """Parse ``key = value`` lines; ``#`` starts a comment, ``[section]`` lines are ignored."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileParse(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s or (s.startswith("[") and s.endswith("]")):
            continue
        if "=" not in s:
            raise FileParse(f"{path}:{lineno}: expected key = value")
        k, v = (p.strip() for p in s.split("=", 1))
        out[k] = v
    return out


def load_config(path=None, overrides=None):
    cfg = RunConfig()
    if path is not None:
        cfg = cfg.update(read_config_file(path))
    if overrides:
        cfg = cfg.update(overrides)
    return cfg
