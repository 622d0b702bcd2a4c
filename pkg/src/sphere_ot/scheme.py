"""Monotone meshfree discretization of the second boundary value problem on S^2.

The operator at node ``x`` acts on a grid function ``u`` through the
projected stencil of ``x``:

* Directional second differences ``D_nu u`` along ``2K`` directions, paired
  into ``K`` orthogonal pairs ``(nu_k, nu_k + pi/2)``. Each direction is
  realized by the forward and backward neighbors whose projected directions
  deviate least from ``+nu`` and ``-nu``.
* A Monge-Ampere part ``F = -min_k P(Delta_k, Delta_k') + H - C_u tau`` with
  ``Delta = D_nu u + nu^T A nu`` and
  ``P(a, b) = max(a, d) max(b, d) + min(a - d, 0) + min(b - d, 0)``,
  which is nonincreasing in neighbor values for any ``d >= 0``.
* An Eikonal part ``E = max_y (u(x) - u(y)) / d(x, y)``.
* ``G = max(F, E - R)``.

``A``, ``H`` and the gradient correction use a lagged gradient estimate
``p`` which the solver holds fixed while it solves for ``u``; with ``p``
fixed, every operator here is monotone in the sense above.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .exceptions import ConfigError, EmptyStencil, NoAntipodalNeighbor


def truncation_scale(h, r, dtheta, C_tau=1.0):
    """Consistency scale ``tau = C_tau (r^2 + h / r + dtheta)``."""
    return C_tau * (r**2 + h / r + dtheta)


@dataclass(frozen=True)
class SchemeParams:
    """Knobs of the discrete operator.

    Parameters
    ----------
    tau : float
        Truncation scale; weight of the zeroth-order term in ``G + tau u``.
    R : float
        Gradient bound of the Eikonal branch.
    delta : float
        Positivity floor ``d`` inside the pair value (0 recovers the plain
        product on the admissible cone).
    n_pairs : int
        Number ``K`` of orthogonal direction pairs.
    shift : float
        Constant ``C_u`` subtracted as ``C_u tau`` from the Monge-Ampere
        branch so that the scheme underestimates the continuous operator.
    gradient_correction : bool
        Remove the first-order bias of skewed three-point differences using
        the lagged gradient.
    eikonal_sign : int
        +1 for the correct Eikonal operator. -1 flips it and exists only to
        check that the property suite notices a broken scheme.
    """

    tau: float
    R: float
    delta: float = 0.0
    n_pairs: int = 8
    shift: float = 0.0
    gradient_correction: bool = True
    eikonal_sign: int = 1

    def __post_init__(self):
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.delta < 0:
            raise ConfigError("delta must be nonnegative")
        if self.n_pairs < 1:
            raise ConfigError("need at least one direction pair")


def ideal_directions(n_pairs):
    """``(2K, 2)`` unit directions; rows ``j`` and ``j + K`` are orthogonal."""
    ang = np.arange(2 * n_pairs) * np.pi / (2 * n_pairs)
    return np.column_stack([np.cos(ang), np.sin(ang)])


def _wrap(a):
    return np.abs(np.mod(a + np.pi, 2 * np.pi) - np.pi)


def _choose(z, n_pairs, node=None):
    """Forward/backward neighbor positions for each ideal direction.

    Returns ``(fwd, bwd)`` arrays of length ``2K`` indexing rows of ``z``.
    """
    if len(z) == 0:
        raise EmptyStencil(f"node {node} has an empty stencil")
    ang = np.arctan2(z[:, 1], z[:, 0])
    target = np.arange(2 * n_pairs) * np.pi / (2 * n_pairs)
    out = []
    for t in (target, target + np.pi):
        dev = _wrap(ang[:, None] - t[None, :])
        pick = np.argmin(dev, axis=0)
        if np.any(dev[pick, np.arange(len(t))] > np.pi / 2):
            raise NoAntipodalNeighbor(f"node {node}: no neighbor within 90 degrees of a stencil direction")
        out.append(pick)
    return out[0], out[1]


def _three_point(zp, zm):
    """Weights and first-order bias of the skewed three-point difference."""
    tp = np.linalg.norm(zp, axis=-1)
    tm = np.linalg.norm(zm, axis=-1)
    s = tp + tm
    wp = 2.0 / (tp * s)
    wm = 2.0 / (tm * s)
    bias = wp[..., None] * zp + wm[..., None] * zm
    return tp, tm, wp, wm, bias


@dataclass
class DirectionPairs:
    """Per-node direction data, all arrays of shape ``(n, 2K, ...)``."""

    n_pairs: int
    fwd: np.ndarray
    bwd: np.ndarray
    wp: np.ndarray
    wm: np.ndarray
    bias: np.ndarray
    up: np.ndarray
    um: np.ndarray
    tp: np.ndarray
    tm: np.ndarray

    def directional_weights(self, A):
        """``nu^T A nu`` averaged over the two realized half-directions."""
        qp = np.einsum("nja,nab,njb->nj", self.up, A, self.up)
        qm = np.einsum("nja,nab,njb->nj", self.um, A, self.um)
        return (self.tp * qp + self.tm * qm) / (self.tp + self.tm)


def select_directions(cloud, n_pairs=8):
    n = cloud.n
    m = 2 * n_pairs
    fwd = np.empty((n, m), dtype=np.int64)
    bwd = np.empty((n, m), dtype=np.int64)
    zp = np.empty((n, m, 2))
    zm = np.empty((n, m, 2))
    for i in range(n):
        s = slice(cloud.indptr[i], cloud.indptr[i + 1])
        z = cloud.z[s]
        f, b = _choose(z, n_pairs, node=i)
        nb = cloud.nbr[s]
        fwd[i], bwd[i] = nb[f], nb[b]
        zp[i], zm[i] = z[f], z[b]
    tp, tm, wp, wm, bias = _three_point(zp, zm)
    return DirectionPairs(n_pairs, fwd, bwd, wp, wm, bias, zp / tp[..., None], zm / tm[..., None], tp, tm)


def pair_value(a, b, delta=0.0):
    """Regularized product of two directional values."""
    return (np.maximum(a, delta) * np.maximum(b, delta)
            + np.minimum(a - delta, 0.0) + np.minimum(b - delta, 0.0))


def _pair_slopes(a, b, delta):
    # derivative of pair_value in a (at a == delta take the larger one-sided slope)
    right = np.maximum(b, delta)
    return np.where(a > delta, right, np.where(a < delta, 1.0, np.maximum(1.0, right)))


# ---------------------------------------------------------------------------
# single-stencil operators

def second_directional_difference(stencil, values, forward_neighbor, backward_neighbor, gradient=None):
    """Second difference of ``values`` through the center of ``stencil``.

    ``forward_neighbor`` and ``backward_neighbor`` are positions in the
    stencil's neighbor list and must lie on roughly opposite sides. If a
    tangent ``gradient`` (frame coordinates) is given, the first-order bias
    from the two points not being exactly collinear is removed.
    """
    z = stencil.projected
    zp, zm = z[forward_neighbor], z[backward_neighbor]
    if np.dot(zp, zm) >= 0:
        raise NoAntipodalNeighbor("forward and backward neighbors are not on opposite sides")
    values = np.asarray(values, dtype=float)
    u0 = values[stencil.center_index]
    up = values[stencil.neighbor_indices[forward_neighbor]]
    um = values[stencil.neighbor_indices[backward_neighbor]]
    _, _, wp, wm, bias = _three_point(zp, zm)
    out = wp * (up - u0) + wm * (um - u0)
    if gradient is not None:
        out -= float(np.dot(gradient, bias))
    return float(out)


def eikonal(stencil, values, sign=1):
    """``max_y (u(x) - u(y)) / d(x, y)`` over the stencil."""
    values = np.asarray(values, dtype=float)
    diff = values[stencil.center_index] - values[stencil.neighbor_indices]
    return float(np.max(sign * diff / stencil.distances))


@dataclass
class NodeCoefficients:
    """Frozen coefficients at one node: ``A`` (2x2 frame matrix), ``H`` and
    the lagged gradient ``p`` (frame coordinates)."""

    A: np.ndarray
    H: float
    p: np.ndarray


def _node_deltas(stencil, values, coeffs, params):
    fwd, bwd = _choose(stencil.projected, params.n_pairs, node=stencil.center_index)
    z = stencil.projected
    zp, zm = z[fwd], z[bwd]
    tp, tm, wp, wm, bias = _three_point(zp, zm)
    values = np.asarray(values, dtype=float)
    u0 = values[stencil.center_index]
    d = wp * (values[stencil.neighbor_indices[fwd]] - u0) + wm * (values[stencil.neighbor_indices[bwd]] - u0)
    if params.gradient_correction:
        d = d - bias @ np.asarray(coeffs.p, dtype=float)
    up, um = zp / tp[:, None], zm / tm[:, None]
    A = np.asarray(coeffs.A, dtype=float)
    q = (tp * np.einsum("ja,ab,jb->j", up, A, up) + tm * np.einsum("ja,ab,jb->j", um, A, um)) / (tp + tm)
    return d + q


def ma_operator(stencil, values, coeffs, params):
    """Monge-Ampere branch ``F`` at the stencil center."""
    delta = _node_deltas(stencil, values, coeffs, params)
    K = params.n_pairs
    P = pair_value(delta[:K], delta[K:], params.delta)
    return float(-P.min() + coeffs.H - params.shift * params.tau)


def combined_operator(stencil, values, coeffs, params):
    """``G = max(F, E - R)`` at the stencil center."""
    F = ma_operator(stencil, values, coeffs, params)
    E = eikonal(stencil, values, sign=params.eikonal_sign)
    return max(F, E - params.R)


def discrete_average(cloud, values):
    """Quadrature average ``sum_i w_i u_i`` with area weights summing to one."""
    return float(np.dot(cloud.weights, np.asarray(values, dtype=float)))


# ---------------------------------------------------------------------------
# whole-cloud operators

def gradient_weights(cloud):
    """Per-neighbor weights of a least-squares quadratic fit gradient.

    Returns an ``(nnz, 2)`` array aligned with ``cloud.nbr`` such that the
    gradient at node ``i`` is ``sum_k W[k] (u[nbr[k]] - u[i])``. Nodes with
    fewer than five neighbors fall back to a linear fit.
    """
    W = np.empty((len(cloud.nbr), 2))
    for i in range(cloud.n):
        s = slice(cloud.indptr[i], cloud.indptr[i + 1])
        z = cloud.z[s]
        if len(z) >= 5:
            M = np.column_stack([z, 0.5 * z[:, 0] ** 2, z[:, 0] * z[:, 1], 0.5 * z[:, 1] ** 2])
        else:
            M = z
        W[s] = np.linalg.pinv(M)[:2].T
    return W


@dataclass
class OperatorState:
    """Branch information of ``G`` at a grid function, used for Jacobians."""

    G: np.ndarray
    F: np.ndarray
    E: np.ndarray
    delta: np.ndarray
    active_pair: np.ndarray
    eikonal_arg: np.ndarray


class Discretization:
    """Vectorized scheme on a whole point cloud.

    Parameters
    ----------
    cloud : PointCloud
    params : SchemeParams
    """

    def __init__(self, cloud, params, directions=None):
        self.cloud = cloud
        self.params = params
        self.directions = directions if directions is not None else select_directions(cloud, params.n_pairs)
        if self.directions.n_pairs != params.n_pairs:
            raise ConfigError("direction data built for a different number of pairs")
        self._gw = gradient_weights(cloud)
        self._center = cloud.center
        self._starts = cloud.indptr[:-1]

    @property
    def n(self):
        return self.cloud.n

    def gradient(self, u):
        """Least-squares gradient estimate in frame coordinates, ``(n, 2)``."""
        u = np.asarray(u, dtype=float)
        du = u[self.cloud.nbr] - u[self._center]
        g = self._gw * du[:, None]
        return np.add.reduceat(g, self._starts, axis=0)

    def second_differences(self, u, p=None):
        dp = self.directions
        u = np.asarray(u, dtype=float)
        u0 = u[:, None]
        D = dp.wp * (u[dp.fwd] - u0) + dp.wm * (u[dp.bwd] - u0)
        if p is not None and self.params.gradient_correction:
            D = D - np.einsum("nja,na->nj", dp.bias, p)
        return D

    def eikonal(self, u):
        u = np.asarray(u, dtype=float)
        c = self.cloud
        diff = self.params.eikonal_sign * (u[self._center] - u[c.nbr]) / c.dist
        E = np.maximum.reduceat(diff, self._starts)
        return E, diff

    def state(self, u, coeffs):
        """Evaluate ``G`` and record the active branches.

        ``coeffs`` is a :class:`Coefficients` bundle (``A``, ``H``, ``p``).
        """
        prm = self.params
        K = prm.n_pairs
        delta = self.second_differences(u, coeffs.p) + coeffs.q
        P = pair_value(delta[:, :K], delta[:, K:], prm.delta)
        k = np.argmin(P, axis=1)
        F = -P[np.arange(self.n), k] + coeffs.H - prm.shift * prm.tau
        E, diff = self.eikonal(u)
        # position of the maximizing neighbor in each row
        hit = np.flatnonzero(diff == E[self._center])
        first = np.full(self.n, len(diff), dtype=np.int64)
        np.minimum.at(first, self._center[hit], hit)
        G = np.maximum(F, E - prm.R)
        return OperatorState(G, F, E, delta, k, first)

    def operator(self, u, coeffs):
        return self.state(u, coeffs).G

    def residual(self, u, coeffs):
        """``G(u) + tau u``."""
        return self.operator(u, coeffs) + self.params.tau * np.asarray(u, dtype=float)

    def jacobian(self, u, coeffs, state=None):
        """Generalized Jacobian of ``G + tau u`` on the active branches.

        The result is a diagonally dominant M-matrix: positive diagonal,
        nonpositive off-diagonal entries, row sums equal to ``tau``.
        """
        st = self.state(u, coeffs) if state is None else state
        prm = self.params
        dp = self.directions
        n, K = self.n, prm.n_pairs
        rows = np.arange(n)
        use_f = st.F >= st.E - prm.R
        nf = rows[use_f]
        k = st.active_pair[nf]
        a = st.delta[nf, k]
        b = st.delta[nf, k + K]
        r_list, c_list, v_list = [], [], []
        for j, s_ in ((k, _pair_slopes(a, b, prm.delta)), (k + K, _pair_slopes(b, a, prm.delta))):
            wp = dp.wp[nf, j] * s_
            wm = dp.wm[nf, j] * s_
            r_list += [nf, nf, nf]
            c_list += [dp.fwd[nf, j], dp.bwd[nf, j], nf]
            v_list += [-wp, -wm, wp + wm]
        ne = rows[~use_f]
        pos = st.eikonal_arg[ne]
        inv = prm.eikonal_sign / self.cloud.dist[pos]
        r_list += [ne, ne]
        c_list += [ne, self.cloud.nbr[pos]]
        v_list += [inv, -inv]
        r_list.append(rows)
        c_list.append(rows)
        v_list.append(np.full(n, prm.tau))
        J = sp.csr_matrix((np.concatenate(v_list), (np.concatenate(r_list), np.concatenate(c_list))),
                          shape=(n, n))
        return J

    def lipschitz_bound(self, grid_functions, coeffs):
        """Bound on the diagonal ``d(G + tau u)_i / du_i`` over the box spanned
        by ``grid_functions``. An explicit Euler step with ``dt`` below its
        inverse is order preserving on that box.

        The directional values ``Delta`` are affine in ``u``, so their size
        on the box is bounded by their size at the corners; the slope of the
        pair value in one argument is at most ``max(1, |other|, delta)``.
        """
        prm = self.params
        K = prm.n_pairs
        dp = self.directions
        lo = np.minimum.reduce([np.asarray(g, dtype=float) for g in grid_functions])
        hi = np.maximum.reduce([np.asarray(g, dtype=float) for g in grid_functions])
        # bound |Delta| via the worst neighbor/center combination
        span = np.abs(self.second_differences(lo, coeffs.p)) + np.abs(self.second_differences(hi, coeffs.p))
        span += (dp.wp + dp.wm) * (hi - lo).max() * 2
        B = np.maximum(np.maximum(span + np.abs(coeffs.q), 1.0), prm.delta)
        w = dp.wp + dp.wm
        ma = (B[:, K:] * w[:, :K] + B[:, :K] * w[:, K:]).max(axis=1)
        eik = 1.0 / np.minimum.reduceat(self.cloud.dist, self._starts)
        return float(np.max(np.maximum(ma, eik)) + prm.tau)

    def average(self, u):
        return discrete_average(self.cloud, u)

    def stencil_coefficients(self, coeffs, i):
        return NodeCoefficients(A=coeffs.A[i], H=float(coeffs.H[i]), p=coeffs.p[i])


@dataclass
class Coefficients:
    """Frozen coefficients on the whole cloud.

    ``A``: ``(n, 2, 2)`` frame matrices, ``H``: ``(n,)``, ``p``: ``(n, 2)``
    lagged gradient, ``q``: ``(n, 2K)`` directional values of ``A``.
    """

    A: np.ndarray
    H: np.ndarray
    p: np.ndarray
    q: np.ndarray

    @classmethod
    def build(cls, disc, A, H, p):
        A = np.asarray(A, dtype=float)
        return cls(A=A, H=np.asarray(H, dtype=float), p=np.asarray(p, dtype=float),
                   q=disc.directions.directional_weights(A))
