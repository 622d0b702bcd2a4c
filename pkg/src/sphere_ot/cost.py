"""Transport costs on S^2, their optimal maps and the Monge-Ampere coefficients.

Two costs are supported:

* ``squared_geodesic``: ``c(x, y) = d(x, y)^2 / 2``
* ``logarithmic``: ``c(x, y) = -log |x - y|`` (reflector antenna)

For a tangent vector ``p`` at ``x`` the map ``T(x, p)`` solves
``grad_x c(x, T) = -p``. The coefficient matrix ``A(x, p)`` is the tangent
Hessian of ``x -> c(x, T(x, p))`` (with ``T`` frozen) and
``H(x, p) = f1(x) / (|det D_p T(x, p)| f2(T(x, p)))``; the determinant
identity ``|det D2_xy c| = 1 / |det D_p T|`` follows from differentiating the
map condition in ``p``. Both are computed by central differences in
geodesic normal coordinates.

Every function is vectorized over leading axes of ``x`` and ``p``. Matrices
are expressed in the deterministic frames of :func:`geometry.tangent_frame`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, SingularCost, ZeroDensity
from .geometry import exp_map, geodesic_distance, tangent_frame

SQUARED = "squared_geodesic"
LOG = "logarithmic"
COST_KINDS = (SQUARED, LOG)
_ALIASES = {"squared": SQUARED, "sq": SQUARED, "log": LOG, "logarithmic": LOG, SQUARED: SQUARED}

DEFAULT_R = {SQUARED: 1.1 * np.pi, LOG: 5.0}


@dataclass(frozen=True)
class CostModel:
    """Cost configuration.

    Parameters
    ----------
    kind : str
        ``"squared_geodesic"`` or ``"logarithmic"`` (aliases ``"squared"``,
        ``"log"``).
    R : float, optional
        Gradient bound enforced by the Eikonal branch of the scheme.
        Must exceed pi for the squared cost. Defaults to ``1.1 pi`` and
        ``5.0`` respectively.
    derivative_step : float
        Step for first derivatives (map Jacobian), scaled by ``max(1, |p|)``.
    hessian_step : float
        Step for the second differences giving ``A``.
    map_convention : str
        ``"full"`` (exponential map, the default) or ``"half"``, the variant
        with half angles. Only the former satisfies the map condition; the
        latter is kept so the oracle can demonstrate it.
    """

    kind: str = SQUARED
    R: float | None = None
    derivative_step: float = 1e-5
    hessian_step: float = 1e-4
    map_convention: str = "full"

    def __post_init__(self):
        kind = _ALIASES.get(self.kind)
        if kind is None:
            raise ConfigError(f"unknown cost {self.kind!r}; valid: {', '.join(COST_KINDS)}")
        object.__setattr__(self, "kind", kind)
        if self.R is None:
            object.__setattr__(self, "R", DEFAULT_R[kind])
        R = float(self.R)
        object.__setattr__(self, "R", R)
        if kind == SQUARED and R <= np.pi:
            raise ConfigError(f"squared geodesic cost needs R > pi, got {R}")
        if R <= 0:
            raise ConfigError("R must be positive")
        if self.map_convention not in ("full", "half"):
            raise ConfigError("map_convention must be 'full' or 'half'")
        if self.derivative_step <= 0 or self.hessian_step <= 0:
            raise ConfigError("finite-difference steps must be positive")

    @property
    def chart_bound(self):
        """Largest |p| at which the coefficients stay finite."""
        if self.kind == SQUARED:
            return np.pi
        return np.inf


def gradient_bound(model):
    return model.R


def cost(model, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if model.kind == SQUARED:
        return 0.5 * geodesic_distance(x, y) ** 2
    dist2 = np.sum((x - y) ** 2, axis=-1)
    if np.any(dist2 == 0.0):
        raise SingularCost("log cost is singular at x = y")
    return -0.5 * np.log(dist2)


def transport_map(model, x, p):
    """Image ``T(x, p)`` of the map solving ``grad_x c(x, T) = -p``."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if model.kind == SQUARED:
        if model.map_convention == "full":
            return exp_map(x, p)
        n = np.linalg.norm(p, axis=-1, keepdims=True)
        return np.cos(n / 2) * x + 0.5 * np.sinc(n / (2 * np.pi)) * p
    s = np.sum(p * p, axis=-1, keepdims=True)
    return (x * (s - 0.25) - p) / (s + 0.25)


def _frame_stack(x):
    e1, e2 = tangent_frame(x)
    return np.stack([e1, e2], axis=-2)


def map_jacobian(model, x, p, step=None):
    """``D_p T`` as a 2x2 matrix from the frame at ``x`` to the frame at ``T``.

    Central differences with step ``step * max(1, |p|)``.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    x, p = np.broadcast_arrays(x, p)
    step = model.derivative_step if step is None else step
    s = step * np.maximum(1.0, np.linalg.norm(p, axis=-1))[..., None]
    E = _frame_stack(x)
    T = transport_map(model, x, p)
    ET = _frame_stack(T)
    cols = []
    for j in range(2):
        dp = s * E[..., j, :]
        dT = (transport_map(model, x, p + dp) - transport_map(model, x, p - dp)) / (2 * s)
        cols.append(np.einsum("...ij,...j->...i", ET, dT))
    return np.stack(cols, axis=-1)


def _exp_offset(x, v):
    """``exp_x(v) - x`` without cancellation for small ``v``."""
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return -2.0 * np.sin(n / 2) ** 2 * x + np.sinc(n / np.pi) * v


def cost_difference(model, x, dx, y):
    """``c(x + dx, y) - c(x, y)`` accurate to a few ulps relative to its size.

    Both ``x`` and ``x + dx`` must lie on the sphere. The squared-norm
    difference ``|x + dx - y|^2 - |x - y|^2 = dx . (2 (x - y) + dx)`` is
    formed directly so that nothing cancels.
    """
    w = x - y
    q = np.sum(w * w, axis=-1)
    dq = np.sum(dx * (2 * w + dx), axis=-1)
    if model.kind == LOG:
        if np.any(q == 0.0) or np.any(q + dq <= 0.0):
            raise SingularCost("log cost is singular at x = y")
        return -0.5 * np.log1p(dq / q)
    # d = 2 asin(a) with a = |x - y| / 2, and
    # asin(a') - asin(a) = asin((a'^2 - a^2) / (a' sqrt(1 - a^2) + a sqrt(1 - a'^2)))
    a = np.sqrt(q) / 2
    a2 = np.sqrt(np.maximum(q + dq, 0.0)) / 2
    den = a2 * np.sqrt(np.maximum(1 - a * a, 0.0)) + a * np.sqrt(np.maximum(1 - a2 * a2, 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        dd = 2 * np.arcsin(np.clip(np.where(den > 0, (dq / 4) / den, 0.0), -1, 1))
    d = 2 * np.arcsin(np.minimum(a, 1.0))
    return 0.5 * dd * (2 * d + dd)


def cost_hessian(model, x, y, step=None):
    """Tangent Hessian at ``x`` of ``c(., y)`` in normal coordinates.

    Second differences of :func:`cost_difference`, so the roundoff is
    relative to the cost increments rather than to the cost itself.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    x, y = np.broadcast_arrays(x, y)
    s = model.hessian_step if step is None else step
    E = _frame_stack(x)
    e1, e2 = E[..., 0, :], E[..., 1, :]

    def f(a, b):
        return cost_difference(model, x, _exp_offset(x, a * s * e1 + b * s * e2), y)

    h11 = (f(1, 0) + f(-1, 0)) / s**2
    h22 = (f(0, 1) + f(0, -1)) / s**2
    h12 = (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / (4 * s**2)
    return np.stack([np.stack([h11, h12], -1), np.stack([h12, h22], -1)], -2)


@dataclass
class CoefficientPair:
    """``A`` (tangent-frame 2x2, symmetric) and ``H`` (positive) at nodes."""

    A: np.ndarray
    H: np.ndarray
    target: np.ndarray


def coefficients(model, x, p, f1_at_x, f2, hessian_step=None, derivative_step=None):
    """Coefficients ``A(x, p)`` and ``H(x, p)``.

    Parameters
    ----------
    x : array (..., 3)
    p : array (..., 3)
        Tangent vectors (ambient coordinates).
    f1_at_x : array (...)
        Source density at ``x``.
    f2 : callable
        Target density evaluated on arrays of points.
    """
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    T = transport_map(model, x, p)
    A = cost_hessian(model, x, T, step=hessian_step)
    J = map_jacobian(model, x, p, step=derivative_step)
    detJ = np.abs(np.linalg.det(J))
    f2T = np.asarray(f2(T), dtype=float)
    if np.any(~(f2T > 0)):
        raise ZeroDensity("target density vanishes at a transport image")
    H = np.asarray(f1_at_x, dtype=float) / (detJ * f2T)
    return CoefficientPair(A=0.5 * (A + np.swapaxes(A, -1, -2)), H=H, target=T)
