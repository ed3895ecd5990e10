"""Quadrature-orthonormal bases extracted from network features.

The weighted feature matrix ``Phi[i, j] = sqrt(w_i) phi_j(x_i)`` is
factored as ``Phi = Q S V^T``.  The functions

    q_k(x) = sum_l phi_l(x) V[l, k] / S[k]

are orthonormal under the quadrature inner product and ordered by
decreasing singular value, so truncating at rank ``r`` keeps
``q_0, ..., q_r``.  Derivatives follow by applying the same coefficients
to the exact feature derivatives.
"""

import json

import numpy as np
from numpy.polynomial import legendre
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .network import FeatureNetwork

__all__ = [
    "DROP_TOL",
    "OrthonormalBasis",
    "LegendreBasis",
    "assemble_feature_matrix",
    "extract_basis",
    "load_basis",
]

DROP_TOL = 1e-13


def assemble_feature_matrix(network, nodes, weights):
    """Weighted feature matrix of shape ``(n_nodes, d_L + 1)``."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights <= 0):
        raise ValueError("quadrature weights must be positive")
    phi = network.features(nodes)
    if not np.all(np.isfinite(phi)):
        raise ValueError("non-finite feature values")
    return np.sqrt(weights)[:, None] * phi


def _coefficients(V, S, r_max):
    # C order whatever the SVD returned: BLAS summation order depends on the
    # layout and rounding is amplified by 1 / S_k, so a reloaded basis only
    # reproduces evaluations bit for bit if the layout is fixed
    return np.ascontiguousarray(V[:, :r_max] / S[:r_max])


class _RankedBasis:
    """Evaluation helpers shared by the network and polynomial bases."""

    def _check_rank(self, r):
        check_is_fitted(self)
        if r is None:
            return self.r_max_ - 1
        r = int(r)
        if not 0 <= r < self.r_max_:
            raise ValueError(f"rank must satisfy 0 <= r < r_max = {self.r_max_}, got {r}")
        return r

    def eval_basis(self, X, r=None):
        """Values ``q_0..q_r`` at ``X``, shape ``(n, r + 1)``."""
        return self.derivatives(X, r, order=0)[0]

    def eval_basis_gradient(self, X, r=None):
        """Gradients, shape ``(n, r + 1, d)``."""
        return self.derivatives(X, r, order=1)[1]

    def eval_basis_laplacian(self, X, r=None):
        """Laplacians, shape ``(n, r + 1)``."""
        return self.derivatives(X, r, order=2)[2]

    def transform(self, X):
        """Values of every admissible basis function at ``X``."""
        return self.eval_basis(X)


class OrthonormalBasis(_RankedBasis, TransformerMixin, BaseEstimator):
    """Hierarchical orthonormal basis spanned by a network's last-layer features.

    Parameters
    ----------
    network : FeatureNetwork
        Source of the features ``phi_j`` (the constant feature included).
    tol : float, default=1e-13
        Singular values at or below ``tol * S[0]`` are dropped.

    Attributes
    ----------
    singular_values_ : ndarray of shape (d_L + 1,)
    right_vectors_ : ndarray of shape (d_L + 1, d_L + 1)
    left_vectors_ : ndarray of shape (n_nodes, d_L + 1)
        ``Q`` from the thin SVD; ``q_k(x_i) = Q[i, k] / sqrt(w_i)``.
    r_max_ : int
        Number of admissible basis functions.
    """

    def __init__(self, network=None, tol=DROP_TOL):
        self.network = network
        self.tol = tol

    def fit(self, X, y=None, sample_weight=None):
        """Extract the basis from quadrature nodes ``X`` and weights ``sample_weight``."""
        if self.network is None:
            raise ValueError("OrthonormalBasis needs a network")
        X = check_array(X, dtype=float)
        if sample_weight is None:
            raise ValueError("quadrature weights are required as sample_weight")
        sample_weight = np.asarray(sample_weight, dtype=float)
        if sample_weight.shape != (len(X),):
            raise ValueError("sample_weight must have one entry per node")
        phi = assemble_feature_matrix(self.network, X, sample_weight)
        self._fit_matrix(phi)
        self.nodes_ = X
        self.weights_ = sample_weight
        return self

    def _fit_matrix(self, phi):
        if phi.shape[0] < phi.shape[1]:
            raise ValueError(f"need at least as many nodes as features, got {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise ValueError("feature matrix has non-finite entries")
        Q, S, Vt = np.linalg.svd(phi, full_matrices=False)
        if S[0] <= 0:
            raise ValueError("feature matrix is identically zero")
        self.singular_values_ = S
        self.right_vectors_ = np.ascontiguousarray(Vt.T)
        self.left_vectors_ = Q
        self.r_max_ = int(np.count_nonzero(S > self.tol * S[0]))
        self.coef_ = _coefficients(self.right_vectors_, S, self.r_max_)
        self.n_features_in_ = self.network.input_dim
        return self

    def derivatives(self, X, r=None, order=2):
        """Values, gradients and Laplacians of ``q_0..q_r``; unused orders are ``None``."""
        r = self._check_rank(r)
        C = self.coef_[:, : r + 1]
        if order == 0:
            return self.network.features(X) @ C, None, None
        vals, grads, laps = self.network.feature_derivatives(X)
        return vals @ C, np.einsum("njd,jk->nkd", grads, C), laps @ C

    def to_dict(self, network_path=None):
        check_is_fitted(self)
        out = {
            "format": "pinnspectral-basis",
            "version": 1,
            "tol": self.tol,
            "singular_values": self.singular_values_.tolist(),
            "right_vectors": self.right_vectors_.ravel().tolist(),
            "network_sha256": self.network.digest(),
        }
        if network_path is not None:
            out["network_path"] = str(network_path)
        else:
            out["network"] = self.network.to_dict()
        if getattr(self, "quadrature_", None) is not None:
            out["quadrature"] = self.quadrature_
        return out

    def save(self, path, network_path=None):
        with open(path, "w") as fh:
            json.dump(self.to_dict(network_path), fh, indent=1)


def extract_basis(phi, network, tol=DROP_TOL):
    """Build an :class:`OrthonormalBasis` from a precomputed feature matrix."""
    return OrthonormalBasis(network, tol)._fit_matrix(np.asarray(phi, dtype=float))


def load_basis(path, network=None):
    """Reload a saved basis; evaluations match the original bit for bit."""
    from .network import load_network

    with open(path) as fh:
        data = json.load(fh)
    if data.get("format") != "pinnspectral-basis":
        raise ValueError("not a pinnspectral basis file")
    if network is None:
        network = FeatureNetwork.from_dict(data["network"]) if "network" in data else load_network(data["network_path"])
    if network.digest() != data["network_sha256"]:
        raise ValueError("network does not match the one the basis was extracted from")
    S = np.array(data["singular_values"])
    basis = OrthonormalBasis(network, data["tol"])
    basis.singular_values_ = S
    basis.right_vectors_ = np.array(data["right_vectors"]).reshape(len(S), len(S))
    basis.r_max_ = int(np.count_nonzero(S > basis.tol * S[0]))
    basis.coef_ = _coefficients(basis.right_vectors_, S, basis.r_max_)
    basis.n_features_in_ = network.input_dim
    basis.quadrature_ = data.get("quadrature")
    return basis


class LegendreBasis(_RankedBasis, TransformerMixin, BaseEstimator):
    """L2-orthonormal Legendre polynomials on an interval.

    Used as a control basis: spans the same role as
    :class:`OrthonormalBasis` without any network.

    Parameters
    ----------
    degree : int
        Highest polynomial degree; ``r_max_ = degree + 1``.
    a, b : float
        Interval end points.
    """

    def __init__(self, degree=16, a=-1.0, b=1.0):
        self.degree = degree
        self.a = a
        self.b = b

    def fit(self, X=None, y=None, sample_weight=None):
        if self.degree < 0 or not self.a < self.b:
            raise ValueError("need degree >= 0 and a < b")
        self.r_max_ = int(self.degree) + 1
        self.n_features_in_ = 1
        k = np.arange(self.r_max_)
        self.norms_ = np.sqrt((2 * k + 1) / (self.b - self.a))
        return self

    def coercive_beta(self):
        """Nitsche penalty large enough for this degree, ``(degree + 1)^2``.

        The inverse trace constant of degree-p polynomials grows like p^2,
        so a fixed penalty loses coercivity once p is large.
        """
        return float((int(self.degree) + 1) ** 2)

    def derivatives(self, X, r=None, order=2):
        r = self._check_rank(r)
        X = np.asarray(X, dtype=float).reshape(-1, 1)
        h = 2.0 / (self.b - self.a)
        t = h * (X[:, 0] - self.a) - 1.0
        eye = np.diag(self.norms_[: r + 1])
        vals = legendre.legval(t, eye).T
        if order == 0:
            return vals, None, None
        d1 = np.column_stack([legendre.legval(t, legendre.legder(c)) for c in eye]) * h
        d2 = np.column_stack([legendre.legval(t, legendre.legder(c, 2)) for c in eye]) * h**2
        return vals, d1[:, :, None], d2
