import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from sphere_ot.cloud import fibonacci_points
from sphere_ot.densities import VonMisesFisher
from sphere_ot.estimator import SphereTransportSolver
from sphere_ot.exceptions import ConfigError
from sphere_ot.geometry import geodesic_distance, random_sphere_points

X = fibonacci_points(300)


def test_params_and_clone():
    est = SphereTransportSolver(cost="log", tau_constant=0.7)
    params = est.get_params()
    assert params["cost"] == "log" and params["tau_constant"] == 0.7
    c = clone(est)
    assert c.get_params() == params
    est.set_params(n_pairs=4)
    assert est.n_pairs == 4


def test_not_fitted():
    with pytest.raises(NotFittedError):
        SphereTransportSolver().predict(X)


def test_identity_fit():
    est = SphereTransportSolver().fit(X)
    np.testing.assert_allclose(est.u_, 0.0, atol=1e-9)
    x = random_sphere_points(100, np.random.default_rng(0))
    np.testing.assert_allclose(est.predict(x), 0.0, atol=1e-9)
    np.testing.assert_allclose(est.transform(x), x, atol=1e-8)
    assert est.score() >= -est.report_.solver_tol


def test_nonuniform_fit_moves_mass():
    y = VonMisesFisher(kappa=4.0, weight=0.6)(X)
    est = SphereTransportSolver(renormalize_f2=True).fit(X, y)
    assert est.report_.converged
    np.testing.assert_allclose(est.predict(X), est.u_, atol=1e-12)
    # mass near the concentration moves away from it
    north = np.array([0.0, 0.0, 1.0])
    x = np.array([[0.3, 0.0, 0.95]])
    x /= np.linalg.norm(x)
    assert geodesic_distance(est.transform(x)[0], north) > geodesic_distance(x[0], north)
    assert est.gradient_.shape == (300, 3)
    np.testing.assert_allclose(np.einsum("ij,ij->i", est.gradient_, est.cloud_.nodes), 0.0, atol=1e-12)


def test_callable_target_and_fit_transform():
    est = SphereTransportSolver(target_density=lambda x: np.full(x.shape[:-1], 1 / (4 * np.pi)))
    T = est.fit_transform(X)
    np.testing.assert_allclose(T, X, atol=1e-8)


def test_input_validation():
    est = SphereTransportSolver()
    with pytest.raises(ConfigError):
        est.fit(X[:, :2])
    with pytest.raises(ConfigError):
        est.fit(np.vstack([X, np.zeros(3)]))
    with pytest.raises(ConfigError):
        est.fit(X, np.ones(10))
    with pytest.raises(ConfigError):
        est.fit(X, -np.ones(len(X)))
    with pytest.raises(ConfigError):
        SphereTransportSolver(target_density=3).fit(X)
    with pytest.raises(ValueError):
        est.fit(np.full((300, 3), np.nan))
