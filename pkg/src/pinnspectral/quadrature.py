"""Gauss-Legendre quadrature on intervals, boxes and the L-shaped domain.

Interior rules are tensor products of 1D Gauss-Legendre rules on one or
more rectangular patches.  Boundary rules carry outward unit normals so
that flux integrals can be evaluated directly.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Domain",
    "Interval",
    "Box",
    "LShape",
    "QuadratureRule",
    "gauss_legendre_1d",
    "build_interior_rule",
    "build_boundary_rule",
    "build_rule",
]

# patches of (-1,1)^2 minus [0,1)^2, each (ax, bx, ay, by)
_LSHAPE_PATCHES = (
    (-1.0, 0.0, -1.0, 0.0),
    (-1.0, 0.0, 0.0, 1.0),
    (0.0, 1.0, -1.0, 0.0),
)

# edges as (start, end, outward normal); traversed counter-clockwise
_LSHAPE_EDGES = (
    ((-1.0, -1.0), (1.0, -1.0), (0.0, -1.0)),
    ((1.0, -1.0), (1.0, 0.0), (1.0, 0.0)),
    ((1.0, 0.0), (0.0, 0.0), (0.0, 1.0)),
    ((0.0, 0.0), (0.0, 1.0), (1.0, 0.0)),
    ((0.0, 1.0), (-1.0, 1.0), (0.0, 1.0)),
    ((-1.0, 1.0), (-1.0, -1.0), (-1.0, 0.0)),
)


@dataclass(frozen=True)
class Domain:
    """Geometric description of one of the supported domains.

    Use the :func:`Interval`, :func:`Box` and :func:`LShape` constructors
    rather than instantiating directly.
    """

    kind: str
    bounds: tuple = ()

    def __post_init__(self):
        if self.kind == "interval":
            a, b = self.bounds
            if not a < b:
                raise ValueError(f"interval requires a < b, got ({a}, {b})")
        elif self.kind == "box":
            ax, bx, ay, by = self.bounds
            if not (ax < bx and ay < by):
                raise ValueError(f"box requires ax < bx and ay < by, got {self.bounds}")
        elif self.kind == "lshape":
            if self.bounds:
                raise ValueError("the L-shaped domain is fixed and takes no bounds")
        else:
            raise ValueError(f"unsupported domain kind {self.kind!r}")

    @property
    def dim(self):
        return 1 if self.kind == "interval" else 2

    @property
    def patches(self):
        """Rectangular patches whose union is the domain."""
        if self.kind == "interval":
            return (tuple(self.bounds),)
        if self.kind == "box":
            return (tuple(self.bounds),)
        return _LSHAPE_PATCHES

    @property
    def measure(self):
        if self.kind == "interval":
            a, b = self.bounds
            return b - a
        return sum((bx - ax) * (by - ay) for ax, bx, ay, by in self.patches)

    @property
    def boundary_measure(self):
        if self.kind == "interval":
            return 2.0
        if self.kind == "box":
            ax, bx, ay, by = self.bounds
            return 2.0 * ((bx - ax) + (by - ay))
        return 8.0

    def contains(self, X):
        """Boolean mask of points lying in the closed domain."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.kind == "interval":
            a, b = self.bounds
            return (X[:, 0] >= a) & (X[:, 0] <= b)
        mask = np.zeros(len(X), dtype=bool)
        for ax, bx, ay, by in self.patches:
            mask |= (X[:, 0] >= ax) & (X[:, 0] <= bx) & (X[:, 1] >= ay) & (X[:, 1] <= by)
        return mask

    def sample_interior(self, n, rng):
        """Draw ``n`` uniform points from the domain (rejection sampling)."""
        if self.kind == "interval":
            a, b = self.bounds
            return rng.uniform(a, b, size=(n, 1))
        if self.kind == "box":
            ax, bx, ay, by = self.bounds
            return np.column_stack([rng.uniform(ax, bx, n), rng.uniform(ay, by, n)])
        out = np.empty((0, 2))
        while len(out) < n:
            cand = rng.uniform(-1.0, 1.0, size=(2 * n, 2))
            keep = ~((cand[:, 0] >= 0.0) & (cand[:, 1] >= 0.0))
            out = np.vstack([out, cand[keep]])
        return out[:n]

    def sample_boundary(self, n, rng):
        """Draw ``n`` points uniformly by arc length on the boundary.

        In 1D the two endpoints are returned (``n`` is ignored).
        """
        if self.kind == "interval":
            a, b = self.bounds
            return np.array([[a], [b]], dtype=float)
        edges = _edges(self)
        lengths = np.array([np.linalg.norm(np.subtract(e, s)) for s, e, _ in edges])
        idx = rng.choice(len(edges), size=n, p=lengths / lengths.sum())
        t = rng.uniform(0.0, 1.0, size=n)
        starts = np.array([edges[i][0] for i in idx])
        ends = np.array([edges[i][1] for i in idx])
        return starts + t[:, None] * (ends - starts)


def Interval(a=-1.0, b=1.0):
    return Domain("interval", (float(a), float(b)))


def Box(ax=-1.0, bx=1.0, ay=-1.0, by=1.0):
    return Domain("box", (float(ax), float(bx), float(ay), float(by)))


def LShape():
    """The domain (-1,1)^2 minus [0,1)^2."""
    return Domain("lshape")


@dataclass(frozen=True)
class QuadratureRule:
    """Interior and boundary quadrature with outward normals.

    Attributes
    ----------
    interior_nodes : ndarray of shape (n_interior, dim)
    interior_weights : ndarray of shape (n_interior,)
    boundary_nodes : ndarray of shape (n_boundary, dim)
    boundary_weights : ndarray of shape (n_boundary,)
    boundary_normals : ndarray of shape (n_boundary, dim)
    """

    interior_nodes: np.ndarray
    interior_weights: np.ndarray
    boundary_nodes: np.ndarray = field(default_factory=lambda: np.empty((0, 1)))
    boundary_weights: np.ndarray = field(default_factory=lambda: np.empty(0))
    boundary_normals: np.ndarray = field(default_factory=lambda: np.empty((0, 1)))
    order: int = 0

    @property
    def dim(self):
        return self.interior_nodes.shape[1]

    def integrate(self, values):
        """Weighted sum of ``values`` at the interior nodes."""
        return float(np.dot(self.interior_weights, values))

    def integrate_boundary(self, values):
        return float(np.dot(self.boundary_weights, values))


def gauss_legendre_1d(n, tol=1e-15, max_iter=100):
    """Gauss-Legendre nodes and weights on (-1, 1).

    Roots of the degree-``n`` Legendre polynomial are found by Newton
    iteration from Chebyshev-type initial guesses.

    Parameters
    ----------
    n : int
        Number of nodes, at least 1.

    Returns
    -------
    nodes, weights : ndarray of shape (n,)
        Nodes sorted ascending.  The rule is exact for polynomials of
        degree up to ``2n - 1``.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"node count must be at least 1, got {n}")
    k = np.arange(1, n + 1)
    x = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    for _ in range(max_iter):
        p, dp = _legendre_and_derivative(n, x)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < tol:
            break
    p, dp = _legendre_and_derivative(n, x)
    weights = 2.0 / ((1.0 - x**2) * dp**2)
    order = np.argsort(x)
    return x[order], weights[order]


def _legendre_and_derivative(n, x):
    p_prev = np.ones_like(x)
    p = x.copy()
    if n == 0:
        return p_prev, np.zeros_like(x)
    for m in range(2, n + 1):
        p_prev, p = p, ((2 * m - 1) * x * p - (m - 1) * p_prev) / m
    dp = n * (x * p - p_prev) / (x**2 - 1.0)
    return p, dp


def _tensor_rule(patch, order):
    ax, bx, ay, by = patch
    t, w = gauss_legendre_1d(order)
    x = 0.5 * (bx - ax) * (t + 1.0) + ax
    y = 0.5 * (by - ay) * (t + 1.0) + ay
    X, Y = np.meshgrid(x, y, indexing="ij")
    W = np.outer(0.5 * (bx - ax) * w, 0.5 * (by - ay) * w)
    return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()


def build_interior_rule(domain, order):
    """Interior Gauss-Legendre rule with ``order`` nodes per axis per patch.

    Returns
    -------
    nodes : ndarray of shape (n, dim)
    weights : ndarray of shape (n,)
    """
    if not isinstance(domain, Domain):
        raise TypeError(f"unsupported domain {domain!r}")
    if order < 2:
        raise ValueError(f"quadrature order must be at least 2, got {order}")
    if domain.kind == "interval":
        a, b = domain.bounds
        t, w = gauss_legendre_1d(order)
        return (0.5 * (b - a) * (t + 1.0) + a)[:, None], 0.5 * (b - a) * w
    parts = [_tensor_rule(p, order) for p in domain.patches]
    return np.vstack([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _edges(domain):
    if domain.kind == "box":
        ax, bx, ay, by = domain.bounds
        return (
            ((ax, ay), (bx, ay), (0.0, -1.0)),
            ((bx, ay), (bx, by), (1.0, 0.0)),
            ((bx, by), (ax, by), (0.0, 1.0)),
            ((ax, by), (ax, ay), (-1.0, 0.0)),
        )
    return _LSHAPE_EDGES


def build_boundary_rule(domain, order):
    """Boundary rule with outward unit normals.

    In 1D the boundary is the two endpoints, each with unit weight.  In 2D
    every straight edge carries an open Gauss-Legendre rule, so corners are
    never nodes.

    Returns
    -------
    nodes : ndarray of shape (m, dim)
    weights : ndarray of shape (m,)
    normals : ndarray of shape (m, dim)
    """
    if not isinstance(domain, Domain):
        raise TypeError(f"unsupported domain {domain!r}")
    if order < 2:
        raise ValueError(f"quadrature order must be at least 2, got {order}")
    if domain.kind == "interval":
        a, b = domain.bounds
        return np.array([[a], [b]]), np.ones(2), np.array([[-1.0], [1.0]])
    t, w = gauss_legendre_1d(order)
    nodes, weights, normals = [], [], []
    for start, end, normal in _edges(domain):
        start, end = np.asarray(start), np.asarray(end)
        length = np.linalg.norm(end - start)
        s = 0.5 * (t + 1.0)
        nodes.append(start + s[:, None] * (end - start))
        weights.append(0.5 * length * w)
        normals.append(np.tile(normal, (order, 1)))
    return np.vstack(nodes), np.concatenate(weights), np.vstack(normals).astype(float)


def build_rule(domain, order, boundary_order=None):
    """Combined interior and boundary rule.

    ``boundary_order`` defaults to ``order`` (nodes per unit-length edge
    segment are not adapted to edge length).
    """
    x, w = build_interior_rule(domain, order)
    bx, bw, bn = build_boundary_rule(domain, boundary_order or order)
    return QuadratureRule(x, w, bx, bw, bn, order=order)
