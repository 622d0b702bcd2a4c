"""Probability densities on S^2.

Built-in densities integrate to one against surface measure. Each is a
callable mapping an ``(..., 3)`` array of unit vectors to values.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ConfigError, FileParse

FOUR_PI = 4.0 * np.pi


class Density:
    name = "density"

    def __call__(self, x):
        raise NotImplementedError

    def describe(self):
        return self.name


class Uniform(Density):
    name = "uniform"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], 1.0 / FOUR_PI)


def _vmf(x, mean, kappa):
    # kappa / (4 pi sinh kappa) exp(kappa mu.x), rearranged to avoid overflow
    c = kappa / (2 * np.pi * (-np.expm1(-2 * kappa)))
    return c * np.exp(kappa * (x @ mean - 1.0))


class VonMisesFisher(Density):
    """Mixture ``(1 - weight) * uniform + weight * vMF(mean, kappa)``.

    The uniform floor keeps the density bounded away from zero.
    """

    name = "vmf"

    def __init__(self, mean=(0.0, 0.0, 1.0), kappa=2.0, weight=0.5):
        mean = np.asarray(mean, dtype=float)
        if kappa <= 0 or not 0 <= weight < 1:
            raise ConfigError("vmf density needs kappa > 0 and 0 <= weight < 1")
        self.mean = mean / np.linalg.norm(mean)
        self.kappa = float(kappa)
        self.weight = float(weight)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (1 - self.weight) / FOUR_PI + self.weight * _vmf(x, self.mean, self.kappa)

    def describe(self):
        return f"vmf(mean={self.mean.tolist()}, kappa={self.kappa}, weight={self.weight})"


class TwoBump(Density):
    """Uniform floor plus two equal von Mises-Fisher bumps."""

    name = "twobump"

    def __init__(self, mean1=(0.0, 0.0, 1.0), mean2=(1.0, 0.0, 0.0), kappa=4.0, weight=0.5):
        if kappa <= 0 or not 0 <= weight < 1:
            raise ConfigError("twobump density needs kappa > 0 and 0 <= weight < 1")
        self.means = [np.asarray(m, dtype=float) / np.linalg.norm(m) for m in (mean1, mean2)]
        self.kappa = float(kappa)
        self.weight = float(weight)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        bumps = sum(_vmf(x, m, self.kappa) for m in self.means) / 2
        return (1 - self.weight) / FOUR_PI + self.weight * bumps

    def describe(self):
        return f"twobump(kappa={self.kappa}, weight={self.weight})"


class Scaled(Density):
    def __init__(self, base, factor):
        self.base = base
        self.factor = float(factor)
        self.name = base.name

    def __call__(self, x):
        return self.factor * self.base(x)

    def describe(self):
        return f"{self.factor:.6g} * {self.base.describe()}"


class Callable(Density):
    """Wrap an arbitrary vectorized function."""

    def __init__(self, func, name="custom"):
        self.func = func
        self.name = name

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)


class NodalDensity(Density):
    """Piecewise-linear interpolant of values given at the nodes of a cloud."""

    name = "nodal"

    def __init__(self, cloud, values, source=None):
        values = np.asarray(values, dtype=float)
        if values.shape != (cloud.n,):
            raise ConfigError(f"expected {cloud.n} nodal density values, got {values.shape}")
        self.cloud = cloud
        self.values = values
        self.source = source

    def __call__(self, x):
        from .lift import interpolate

        return interpolate(self.cloud, self.values, x)

    def describe(self):
        return f"file:{self.source}" if self.source else "nodal"


def read_nodal_values(path):
    """Read one float per line (``#`` comments and an optional header row allowed)."""
    vals = []
    first = True
    try:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                field = line.split(",")[-1].strip()
                try:
                    vals.append(float(field))
                except ValueError:
                    if not first:
                        raise FileParse(f"{path}:{lineno}: not a number: {field!r}") from None
                first = False
    except OSError as exc:
        raise FileParse(f"cannot read density file {path}: {exc}") from exc
    if not vals:
        raise FileParse(f"{path}: no values")
    return np.array(vals)


def parse_density(text, cloud=None):
    """Build a density from a short description.

    ``uniform``, ``vmf``, ``vmf:kappa``, ``vmf:kappa:weight``, ``twobump``,
    ``twobump:kappa``, or ``file:PATH`` (per-node values; requires ``cloud``).
    """
    name, _, rest = str(text).partition(":")
    name = name.strip().lower()
    if name == "file":
        if cloud is None:
            raise ConfigError("file densities need the point cloud")
        return NodalDensity(cloud, read_nodal_values(rest), source=rest)
    try:
        args = [float(a) for a in rest.split(":")] if rest else []
    except ValueError:
        raise ConfigError(f"bad density parameters in {text!r}") from None
    if name == "uniform":
        return Uniform()
    if name == "vmf":
        return VonMisesFisher(*([(0.0, 0.0, 1.0)] + args[:2]))
    if name == "twobump":
        return TwoBump((0.0, 0.0, 1.0), (1.0, 0.0, 0.0), *args[:2])
    raise ConfigError(f"unknown density {text!r}; valid: uniform, vmf, twobump, file:PATH")
