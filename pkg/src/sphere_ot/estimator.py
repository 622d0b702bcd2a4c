"""Estimator-style facade over the discretization and solver.

``fit`` takes the nodes of a point cloud and the source density sampled at
them, solves for the transport potential and stores it; ``predict``
evaluates the potential anywhere on the sphere and ``transform`` maps
points through the fitted transport map.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .cloud import PointCloud
from .cost import CostModel, transport_map
from .densities import Density, parse_density
from .exceptions import ConfigError
from .geometry import project_tangent
from .lift import interpolate
from .solver import SolverConfig, TransportProblem, shift_u


def check_sphere_points(X, name="X"):
    """Validate an ``(n, 3)`` array of points and normalize the rows."""
    X = check_array(X, dtype=float, ensure_2d=True, input_name=name)
    if X.shape[1] != 3:
        raise ConfigError(f"{name} must have 3 columns, got {X.shape[1]}")
    norms = np.linalg.norm(X, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ConfigError(f"{name} contains a zero row")
    return X / norms


def check_node_values(y, n, name="y"):
    """Validate one finite, strictly positive value per node."""
    y = check_array(np.asarray(y, dtype=float).reshape(-1, 1), dtype=float, input_name=name).ravel()
    if len(y) != n:
        raise ConfigError(f"{name} has {len(y)} values for {n} nodes")
    if np.any(y <= 0):
        raise ConfigError(f"{name} must be strictly positive")
    return y


class SphereTransportSolver(TransformerMixin, BaseEstimator):
    """Optimal transport potential on the unit sphere.

    Parameters
    ----------
    cost : str
        ``"squared"`` (half squared geodesic distance) or ``"log"``.
    R : float, optional
        Gradient bound; cost-specific default.
    target_density : str or callable
        Target density ``f2``: a description accepted by
        :func:`densities.parse_density` or a vectorized callable.
    tau_constant : float
        Multiplier of the truncation scale.
    delta_mode : str
        ``"zero"`` or ``"tau"``; positivity floor of the pair products.
    n_pairs : int
        Orthogonal direction pairs per stencil.
    tol : float, optional
        Residual tolerance (default scales with the data).
    max_outer : int
        Limit on gradient updates.
    renormalize_f2 : bool
        Rescale ``f2`` to the discrete mass of ``f1`` instead of failing.
    map_convention : str
        ``"full"`` or ``"half"`` (squared cost only).
    alpha, C_r : float
        Search radius ``r = C_r h^alpha``.

    Attributes
    ----------
    cloud_ : PointCloud
    v_ : ndarray
        Solution of the proper system.
    u_ : ndarray
        Mean-zero potential at the nodes.
    gradient_ : ndarray (n, 3)
        Least-squares gradient of ``u_`` as ambient tangent vectors.
    report_ : SolveReport
    """

    def __init__(self, cost="squared", R=None, target_density="uniform", tau_constant=0.5,
                 delta_mode="zero", n_pairs=8, tol=None, max_outer=50, renormalize_f2=False,
                 map_convention="full", alpha=0.5, C_r=2.0):
        self.cost = cost
        self.R = R
        self.target_density = target_density
        self.tau_constant = tau_constant
        self.delta_mode = delta_mode
        self.n_pairs = n_pairs
        self.tol = tol
        self.max_outer = max_outer
        self.renormalize_f2 = renormalize_f2
        self.map_convention = map_convention
        self.alpha = alpha
        self.C_r = C_r

    def _target(self, cloud):
        f2 = self.target_density
        if isinstance(f2, str):
            return parse_density(f2, cloud)
        if isinstance(f2, Density) or callable(f2):
            return f2
        raise ConfigError("target_density must be a string or a callable")

    def fit(self, X, y=None, v0=None):
        """Solve on the cloud with nodes ``X`` and source density values ``y``.

        ``y=None`` means the uniform density.
        """
        X = check_sphere_points(X)
        cloud = PointCloud.from_nodes(X, alpha=self.alpha, C_r=self.C_r)
        f1 = None if y is None else check_node_values(y, cloud.n)
        model = CostModel(self.cost, self.R, map_convention=self.map_convention)
        config = SolverConfig(tau_constant=self.tau_constant, delta_mode=self.delta_mode, n_pairs=self.n_pairs,
                              tol=self.tol, max_outer=self.max_outer, renormalize_f2=self.renormalize_f2)
        problem = TransportProblem(cloud, model, f1, self._target(cloud), config)
        v, report = problem.solve(v0)
        self.cloud_ = cloud
        self.model_ = model
        self.problem_ = problem
        self.v_ = v
        self.u_ = shift_u(cloud, v)
        self.gradient_ = cloud.to_tangent(problem.gradient(self.u_))
        self.report_ = report
        self.n_features_in_ = 3
        return self

    def predict(self, X):
        """Potential at arbitrary points (piecewise-linear extension)."""
        check_is_fitted(self, "u_")
        X = check_sphere_points(X)
        return interpolate(self.cloud_, self.u_, X)

    def transform(self, X):
        """Images of ``X`` under the fitted transport map.

        The gradient is interpolated from the nodes and projected onto the
        tangent plane at each query point.
        """
        check_is_fitted(self, "u_")
        X = check_sphere_points(X)
        g = np.column_stack([interpolate(self.cloud_, self.gradient_[:, k], X) for k in range(3)])
        return transport_map(self.model_, X, project_tangent(X, g))

    def score(self, X=None, y=None):
        """Negative residual of the fitted discrete system (higher is better)."""
        check_is_fitted(self, "u_")
        return -self.report_.v_residual_inf
