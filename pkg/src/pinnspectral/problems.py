"""Manufactured and reference problems.

Every problem is a set of pointwise callables acting on point arrays of
shape ``(n, d)``.  Forcings are closed forms derived by hand from the
exact solutions; the test suite checks each against finite differences.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .quadrature import Domain, Interval, Box, LShape

__all__ = [
    "PoissonProblem",
    "EvolutionProblem",
    "Nonlinearity",
    "burgers_term",
    "poisson_boltzmann_term",
    "registry",
    "get_problem",
    "PROBLEM_IDS",
    "poisson_1d",
    "poisson_square",
    "poisson_lshape",
    "heat_1d",
    "heat_square",
    "heat_lshape",
    "burgers_steady",
    "burgers_profile",
    "pb_steady",
]

Field = Callable[[np.ndarray], np.ndarray]


@dataclass
class PoissonProblem:
    """``-div(k grad u) = f`` in the domain, ``u = g`` on its boundary.

    ``k`` is either a positive constant or a callable; a callable ``k``
    needs ``grad_k`` for strong-form residuals.
    """

    domain: Domain
    f: Field
    g: Field
    k: Union[float, Field] = 1.0
    grad_k: Optional[Field] = None
    exact: Optional[Field] = None
    exact_grad: Optional[Field] = None
    exact_laplacian: Optional[Field] = None
    name: str = "poisson"
    note: str = ""

    def k_at(self, X):
        if callable(self.k):
            return np.asarray(self.k(X), dtype=float)
        return np.full(len(X), float(self.k))

    def grad_k_at(self, X):
        if not callable(self.k):
            return np.zeros_like(np.asarray(X, dtype=float))
        if self.grad_k is None:
            raise ValueError("variable diffusion needs grad_k for strong residuals")
        return np.asarray(self.grad_k(X), dtype=float)


@dataclass(frozen=True)
class Nonlinearity:
    """Pointwise nonlinear term ``N[u]`` computed from ``u`` and ``grad u``.

    ``func(u, grad_u)`` receives arrays of shape ``(n,)`` and ``(n, d)``.
    """

    name: str
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]

    def __call__(self, u, grad_u):
        return self.func(u, grad_u)


def burgers_term():
    """``N[u] = -u u_x``."""
    return Nonlinearity("burgers", lambda u, gu: -u * gu[:, 0])


def poisson_boltzmann_term(K):
    """``N[u] = -K^2 sinh(u)``."""
    K2 = float(K) ** 2
    return Nonlinearity(f"poisson_boltzmann(K={K})", lambda u, gu: -K2 * np.sinh(u))


@dataclass
class EvolutionProblem:
    """``u_t = div(k grad u) + N[u] + f(t, x)`` with Dirichlet data ``g(t, x)``.

    ``nonlinearity`` of ``None`` means ``N = 0``.  For steady problems the
    forcing and boundary data ignore ``t`` and ``reference`` (when set) is
    the stationary solution used for error reporting.
    """

    domain: Domain
    f: Callable[[float, np.ndarray], np.ndarray]
    g: Callable[[float, np.ndarray], np.ndarray]
    u0: Field
    k: float = 1.0
    nonlinearity: Optional[Nonlinearity] = None
    exact: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    exact_grad: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    reference: Optional[Field] = None
    T: float = 1.0
    dt: float = 1e-2
    name: str = "evolution"
    note: str = ""
    params: dict = field(default_factory=dict)

    @property
    def is_steady(self):
        return self.exact is None

    @classmethod
    def from_poisson(cls, problem, u0=None, **kwargs):
        """Evolution problem whose steady state solves ``problem``."""
        if callable(problem.k):
            raise ValueError("time stepping supports constant diffusion only")
        f, g = problem.f, problem.g
        return cls(
            domain=problem.domain,
            f=lambda t, X: f(X),
            g=lambda t, X: g(X),
            u0=u0 or (lambda X: np.zeros(len(X))),
            k=float(problem.k),
            reference=problem.exact,
            name=problem.name + "_steady",
            **kwargs,
        )


# -- exact solutions -------------------------------------------------------

_S6 = np.sin(6.0)


def _p1_u(X):
    x = X[:, 0]
    return np.sin(6 * x) / 36 + (1 - _S6 / 36) * x + 1


def _p1_grad(X):
    x = X[:, 0]
    return (np.cos(6 * x) / 6 + (1 - _S6 / 36))[:, None]


def _p1_lap(X):
    return -np.sin(6 * X[:, 0])


def _cs_u(X):
    x, y = X[:, 0], X[:, 1]
    return np.cos(np.sin(x) - y**2)


def _cs_grad(X):
    x, y = X[:, 0], X[:, 1]
    s = np.sin(np.sin(x) - y**2)
    return np.column_stack([-s * np.cos(x), 2 * y * s])


def _cs_lap(X):
    x, y = X[:, 0], X[:, 1]
    a = np.sin(x) - y**2
    return -np.cos(a) * (np.cos(x) ** 2 + 4 * y**2) + np.sin(a) * (np.sin(x) + 2)


def _h1_u(t, X):
    return np.sin(5 * X[:, 0]) * np.cos(4 * t)


def _h1_grad(t, X):
    return (5 * np.cos(5 * X[:, 0]) * np.cos(4 * t))[:, None]


def _h1_f(t, X):
    s = np.sin(5 * X[:, 0])
    return -4 * s * np.sin(4 * t) + 25 * s * np.cos(4 * t)


def _h2_u(t, X):
    x, y = X[:, 0], X[:, 1]
    return np.sin(np.exp(x) + y**3) * np.exp(np.cos(4 * t))


def _h2_grad(t, X):
    x, y = X[:, 0], X[:, 1]
    c = np.cos(np.exp(x) + y**3) * np.exp(np.cos(4 * t))
    return np.column_stack([c * np.exp(x), 3 * y**2 * c])


def _h2_f(t, X):
    x, y = X[:, 0], X[:, 1]
    p = np.exp(x) + y**3
    E = np.exp(np.cos(4 * t))
    u_t = -4 * np.sin(4 * t) * np.sin(p) * E
    u_xx = (-np.sin(p) * np.exp(2 * x) + np.cos(p) * np.exp(x)) * E
    u_yy = (-np.sin(p) * 9 * y**4 + np.cos(p) * 6 * y) * E
    return u_t - u_xx - u_yy


def _linear_interpolant(a, b, ga, gb):
    return lambda X: ga + (gb - ga) * (X[:, 0] - a) / (b - a)


# -- registry ----------------------------------------------------------------


def poisson_1d():
    return PoissonProblem(
        domain=Interval(-1, 1),
        f=lambda X: np.sin(6 * X[:, 0]),
        g=_p1_u,
        exact=_p1_u,
        exact_grad=_p1_grad,
        exact_laplacian=_p1_lap,
        name="poisson_1d",
        note="f = sin(6x), g(-1) = 0, g(1) = 2",
    )


def _poisson_cos(domain, name):
    return PoissonProblem(
        domain=domain,
        f=lambda X: -_cs_lap(X),
        g=_cs_u,
        exact=_cs_u,
        exact_grad=_cs_grad,
        exact_laplacian=_cs_lap,
        name=name,
        note="u = cos(sin(x) - y^2)",
    )


def poisson_square():
    return _poisson_cos(Box(-1, 1, -1, 1), "poisson_square")


def poisson_lshape():
    return _poisson_cos(LShape(), "poisson_lshape")


def heat_1d(T=1.0, dt=1e-2):
    return EvolutionProblem(
        domain=Interval(-1, 1),
        f=_h1_f,
        g=_h1_u,
        u0=lambda X: _h1_u(0.0, X),
        exact=_h1_u,
        exact_grad=_h1_grad,
        T=T,
        dt=dt,
        name="heat_1d",
        note="u = sin(5x) cos(4t)",
    )


def _heat_2d(domain, name, T, dt):
    return EvolutionProblem(
        domain=domain,
        f=_h2_f,
        g=_h2_u,
        u0=lambda X: _h2_u(0.0, X),
        exact=_h2_u,
        exact_grad=_h2_grad,
        T=T,
        dt=dt,
        name=name,
        note="u = sin(exp(x) + y^3) exp(cos(4t))",
    )


def heat_square(T=1.0, dt=1e-2):
    return _heat_2d(Box(-1, 1, -1, 1), "heat_square", T, dt)


def heat_lshape(T=1.0, dt=1e-2):
    return _heat_2d(LShape(), "heat_lshape", T, dt)


def burgers_profile(nu):
    """Exact steady profile ``-0.6 tanh(0.3 (x - 0.2) / nu)`` and its derivatives."""
    a, b = 0.6, 0.3 / nu

    def u(X):
        return -a * np.tanh(b * (X[:, 0] - 0.2))

    def du(X):
        return (-a * b / np.cosh(b * (X[:, 0] - 0.2)) ** 2)[:, None]

    def d2u(X):
        th = np.tanh(b * (X[:, 0] - 0.2))
        return 2 * a * b**2 * th * (1 - th**2)

    return u, du, d2u


def burgers_steady(nu=0.1, T=1200.0, dt=0.05):
    u, du, d2u = burgers_profile(nu)
    xs = np.linspace(-1.0, 1.0, 100)[:, None]
    if not np.allclose(nu * d2u(xs), u(xs) * du(xs)[:, 0], rtol=0, atol=1e-10):
        raise RuntimeError("Burgers profile does not satisfy nu u'' = u u'")
    gm, gp = u(np.array([[-1.0], [1.0]]))
    return EvolutionProblem(
        domain=Interval(-1, 1),
        f=lambda t, X: np.zeros(len(X)),
        g=lambda t, X: u(X),
        u0=_linear_interpolant(-1.0, 1.0, gm, gp),
        k=float(nu),
        nonlinearity=burgers_term(),
        reference=u,
        T=T,
        dt=dt,
        name="burgers_steady",
        note="nu u'' = u u', exact u = -0.6 tanh(0.3 (x - 0.2) / nu)",
        params={"nu": nu},
    )


def pb_steady(K=2.0, g_plus=2.0, g_minus=-3.0, T=100.0, dt=0.01):
    """Poisson-Boltzmann ``-u'' + K^2 sinh(u) = 0``; no closed-form solution."""

    def g(t, X):
        return np.where(X[:, 0] > 0, g_plus, g_minus).astype(float)

    return EvolutionProblem(
        domain=Interval(-1, 1),
        f=lambda t, X: np.zeros(len(X)),
        g=g,
        u0=_linear_interpolant(-1.0, 1.0, g_minus, g_plus),
        k=1.0,
        nonlinearity=poisson_boltzmann_term(K),
        T=T,
        dt=dt,
        name="pb_steady",
        note="reference solution from a high-degree Legendre basis",
        params={"K": K, "g_plus": g_plus, "g_minus": g_minus},
    )


_REGISTRY = {
    "poisson_1d": poisson_1d,
    "poisson_square": poisson_square,
    "poisson_lshape": poisson_lshape,
    "heat_1d": heat_1d,
    "heat_square": heat_square,
    "heat_lshape": heat_lshape,
    "burgers_steady": burgers_steady,
    "pb_steady": pb_steady,
}

PROBLEM_IDS = tuple(_REGISTRY)


def registry():
    """Mapping from stable problem identifiers to problem factories."""
    return dict(_REGISTRY)


def get_problem(name, **params):
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(PROBLEM_IDS)}") from None
    return factory(**params)
