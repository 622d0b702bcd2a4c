"""Solve ``G(v) + tau v = 0`` and shift to the mean-zero potential ``u^h``.

The coefficients depend on the gradient of the unknown. The solver freezes a
gradient estimate ``p``, solves the resulting monotone system by a damped
semismooth Newton method (falling back to explicit Euler steps when the line
search fails), recomputes ``p`` and repeats until the coupled residual
``||G(v; p(v)) + tau v||_inf`` is below tolerance.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .cost import SQUARED, CostModel, coefficients
from .densities import Density, Scaled, Uniform
from .exceptions import ConfigError, MassImbalance, NonConvergence
from .scheme import Coefficients, Discretization, SchemeParams, discrete_average, truncation_scale

log = logging.getLogger(__name__)

DELTA_MODES = ("zero", "tau")
_MIN_STEP = 2.0**-20


@dataclass
class SolverConfig:
    """Parameters of the discretization and the nonlinear solve.

    ``damping`` is the first step length tried by the Newton line search.
    ``tol=None`` selects ``1e-10 * max(1, ||H||_inf)`` with ``H`` evaluated
    at zero gradient. ``shift=None`` selects 1 for the squared geodesic cost
    and 0 for the logarithmic cost. ``mass_tol`` bounds the relative
    difference between the discrete masses of ``f1`` and ``f2``.
    """

    tau_constant: float = 0.5
    delta_mode: str = "zero"
    n_pairs: int = 8
    shift: float | None = None
    gradient_correction: bool = True
    tol: float | None = None
    max_newton: int = 500
    damping: float = 1.0
    max_euler: int = 100000
    euler_burst: int = 200
    max_outer: int = 50
    outer_tol: float = 1e-13
    renormalize_f2: bool = False
    mass_tol: float = 0.05
    eikonal_sign: int = 1

    def __post_init__(self):
        if self.delta_mode not in DELTA_MODES:
            raise ConfigError(f"delta_mode must be one of {DELTA_MODES}")
        if self.tau_constant <= 0:
            raise ConfigError("tau_constant must be positive")
        if self.tol is not None and self.tol <= 0:
            raise ConfigError("tol must be positive")
        if not 0 < self.damping <= 1:
            raise ConfigError("damping must lie in (0, 1]")
        if self.max_outer < 1 or self.max_newton < 1:
            raise ConfigError("iteration limits must be positive")


@dataclass
class SolveReport:
    """Diagnostics of one solve."""

    iterations: int
    outer_iterations: int
    euler_steps: int
    final_update_norm: float
    v_residual_inf: float
    uh_scheme_residual_inf: float
    eikonal_max: float
    eikonal_active: int
    discrete_average_of_uh: float
    discrete_average_of_v: float
    lipschitz_estimate: float
    tau: float
    h: float
    r: float
    dtheta: float
    solver_tol: float
    n: int
    converged: bool
    seconds: float = 0.0
    history: list = field(default_factory=list, repr=False)

    def as_dict(self):
        d = asdict(self)
        d.pop("history")
        return d


class TransportProblem:
    """Discretized transport problem on a point cloud.

    Parameters
    ----------
    cloud : PointCloud
    model : CostModel
    f1 : array (n,)
        Source density sampled at the nodes.
    f2 : callable
        Target density, evaluated wherever the transport map lands.
    config : SolverConfig, optional
    """

    def __init__(self, cloud, model=None, f1=None, f2=None, config=None, directions=None):
        self.cloud = cloud
        self.model = model if model is not None else CostModel()
        self.config = config if config is not None else SolverConfig()
        f1 = np.full(cloud.n, 1 / (4 * np.pi)) if f1 is None else np.asarray(f1, dtype=float)
        if f1.shape != (cloud.n,):
            raise ConfigError(f"f1 must have one value per node ({cloud.n}), got shape {f1.shape}")
        if not np.all(np.isfinite(f1)) or np.any(f1 <= 0):
            raise ConfigError("f1 must be finite and positive at every node")
        self.f1 = f1
        f2 = Uniform() if f2 is None else f2
        if not isinstance(f2, Density) and not callable(f2):
            raise ConfigError("f2 must be callable")
        cfg = self.config
        self.tau = truncation_scale(cloud.h, cloud.r, cloud.dtheta, cfg.tau_constant)
        m1 = discrete_average(cloud, f1)
        m2 = discrete_average(cloud, f2(cloud.nodes))
        self.mass_gap = abs(m1 - m2) / max(m1, m2)
        if cfg.renormalize_f2:
            f2 = Scaled(f2, m1 / m2)
        elif self.mass_gap > cfg.mass_tol:
            raise MassImbalance(
                f"discrete masses of f1 and f2 differ by {100 * self.mass_gap:.3g}% "
                f"(allowed {100 * cfg.mass_tol:.3g}%); pass renormalize_f2 to rescale f2")
        self.f2 = f2
        shift = cfg.shift if cfg.shift is not None else (1.0 if self.model.kind == SQUARED else 0.0)
        delta = 0.0 if cfg.delta_mode == "zero" else self.tau
        self.params = SchemeParams(tau=self.tau, R=self.model.R, delta=delta, n_pairs=cfg.n_pairs,
                                   shift=shift, gradient_correction=cfg.gradient_correction,
                                   eikonal_sign=cfg.eikonal_sign)
        self.disc = Discretization(cloud, self.params, directions=directions)
        # keep p inside the chart where the squared-cost coefficients are finite
        self.p_clip = min(self.model.R, 0.95 * self.model.chart_bound)
        if cfg.tol is None:
            H0 = self.coefficients(np.zeros((cloud.n, 2))).H
            self.tol = 1e-10 * max(1.0, float(np.max(np.abs(H0))))
        else:
            self.tol = cfg.tol

    # -- coefficients -------------------------------------------------------
    def clip_gradient(self, p):
        n = np.linalg.norm(p, axis=1, keepdims=True)
        scale = np.minimum(1.0, self.p_clip / np.maximum(n, 1e-300))
        return p * scale

    def gradient(self, v):
        return self.clip_gradient(self.disc.gradient(v))

    def coefficients(self, p):
        """Frozen coefficients for the frame-coordinate gradient ``p``."""
        c = self.cloud
        pa = c.to_tangent(p)
        cp = coefficients(self.model, c.nodes, pa, self.f1, self.f2)
        return Coefficients.build(self.disc, cp.A, cp.H, p)

    def coupled_residual(self, v):
        coeffs = self.coefficients(self.gradient(v))
        return self.disc.residual(v, coeffs), coeffs

    # -- solve ---------------------------------------------------------------
    def _newton(self, v, coeffs, tol, counters):
        """Damped semismooth Newton on ``G(v) + tau v = 0`` with frozen coefficients.

        Steps are accepted on sufficient decrease of the sum of squared
        residuals; the max norm is only used to stop. Near a switch between
        branches the max norm can fail to decrease along the Newton
        direction for every step length, while the 2-norm still does.
        """
        disc = self.disc
        cfg = self.config
        res = disc.residual(v, coeffs)
        rn = np.max(np.abs(res))
        merit = res @ res
        last = 0.0
        for _ in range(cfg.max_newton):
            if rn <= tol:
                break
            st = disc.state(v, coeffs)
            J = disc.jacobian(v, coeffs, state=st)
            dv = spla.spsolve(J.tocsc(), -res)
            counters["newton"] += 1
            lam = cfg.damping
            while lam >= _MIN_STEP:
                trial = v + lam * dv
                r_try = disc.residual(trial, coeffs)
                m_try = r_try @ r_try
                if m_try < (1 - 1e-4 * lam) * merit or np.max(np.abs(r_try)) <= tol:
                    break
                lam *= 0.5
            else:
                v, res, progressed = self._euler(v, res, coeffs, counters)
                last = progressed
                new = res @ res
                if new >= merit and counters["euler"] >= cfg.max_euler:
                    break
                merit, rn = new, np.max(np.abs(res))
                continue
            last = lam * np.max(np.abs(dv))
            v, res, merit = trial, r_try, m_try
            rn = np.max(np.abs(res))
        return v, rn, last

    def _euler(self, v, res, coeffs, counters):
        """Explicit steps ``v <- v - dt (G(v) + tau v)``.

        ``dt`` is below the inverse Lipschitz bound of the residual on a box
        around the iterate, which makes each step order preserving and a
        contraction in the max norm. Stops after the 2-norm of the residual
        has dropped by 10%, after ``euler_burst`` steps (enough to leave a
        branch switch where Newton stalled) or when the total budget
        ``max_euler`` is spent; returns the last update size.
        """
        disc = self.disc
        rn = np.max(np.abs(res))
        dt = 1.0 / disc.lipschitz_bound([v - rn / self.tau, v + rn / self.tau], coeffs)
        target = 0.81 * (res @ res)
        step = 0.0
        budget = min(self.config.euler_burst, self.config.max_euler - counters["euler"])
        for _ in range(max(budget, 0)):
            v = v - dt * res
            step = dt * np.max(np.abs(res))
            res = disc.residual(v, coeffs)
            counters["euler"] += 1
            if res @ res <= target:
                break
        return v, res, step

    def solve(self, v0=None):
        """Return ``(v, report)``. Raises :class:`NonConvergence` on failure."""
        t0 = time.perf_counter()
        cfg = self.config
        n = self.cloud.n
        v = np.zeros(n) if v0 is None else np.array(v0, dtype=float)
        if v.shape != (n,):
            raise ConfigError(f"initial guess must have shape ({n},)")
        counters = {"newton": 0, "euler": 0}
        p = self.gradient(v)
        history = []
        converged = False
        rn_c = np.inf
        last = 0.0
        outer = 0
        for outer in range(1, cfg.max_outer + 1):
            coeffs = self.coefficients(p)
            v, rn_inner, last = self._newton(v, coeffs, self.tol, counters)
            p_new = self.gradient(v)
            change = float(np.max(np.abs(p_new - p)))
            p = p_new
            res, coeffs = self.coupled_residual(v)
            rn_c = float(np.max(np.abs(res)))
            history.append((rn_c, change))
            log.debug("outer %d: residual %.3e, gradient change %.3e", outer, rn_c, change)
            if rn_c <= self.tol or (change < cfg.outer_tol and rn_inner <= self.tol):
                converged = True
                break
        report = self._report(v, coeffs, rn_c, counters, outer, last, converged, history)
        report.seconds = time.perf_counter() - t0
        if not converged:
            raise NonConvergence(
                f"no convergence after {outer} outer iterations; residual {rn_c:.3e} > tol {self.tol:.3e}",
                best_residual=rn_c, report=report)
        return v, report

    def _report(self, v, coeffs, rn, counters, outer, last, converged, history):
        from .lift import stencil_lipschitz

        u = shift_u(self.cloud, v)
        st = self.disc.state(u, coeffs)
        E = st.E
        return SolveReport(
            iterations=counters["newton"], outer_iterations=outer, euler_steps=counters["euler"],
            final_update_norm=float(last), v_residual_inf=float(rn),
            uh_scheme_residual_inf=float(np.max(np.abs(st.G + self.tau * u))),
            eikonal_max=float(np.max(E)), eikonal_active=int(np.sum(st.F < E - self.params.R)),
            discrete_average_of_uh=discrete_average(self.cloud, u),
            discrete_average_of_v=discrete_average(self.cloud, v),
            lipschitz_estimate=stencil_lipschitz(self.cloud, u),
            tau=self.tau, h=self.cloud.h, r=self.cloud.r, dtheta=self.cloud.dtheta,
            solver_tol=self.tol, n=self.cloud.n, converged=converged, history=history)


def shift_u(cloud, v):
    """Mean-zero potential ``u^h = v - A^h(v)``."""
    v = np.asarray(v, dtype=float)
    return v - discrete_average(cloud, v)


def solve_v(cloud, model=None, f1=None, f2=None, config=None, v0=None):
    """Solve the discrete problem; returns ``(v, report)``."""
    return TransportProblem(cloud, model, f1, f2, config).solve(v0)


def residual_report(problem, u):
    """Scheme residual of a grid function with coefficients from its own gradient."""
    res, coeffs = problem.coupled_residual(u)
    st = problem.disc.state(u, coeffs)
    return {
        "residual_inf": float(np.max(np.abs(res))),
        "operator_inf": float(np.max(np.abs(st.G))),
        "eikonal_max": float(np.max(st.E)),
        "eikonal_active": int(np.sum(st.F < st.E - problem.params.R)),
        "average": discrete_average(problem.cloud, u),
    }
