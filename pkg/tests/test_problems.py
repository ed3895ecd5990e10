import numpy as np
import pytest

from pinnspectral.problems import (
    PROBLEM_IDS,
    EvolutionProblem,
    PoissonProblem,
    burgers_profile,
    burgers_steady,
    get_problem,
    heat_1d,
    heat_lshape,
    heat_square,
    pb_steady,
    poisson_1d,
    poisson_lshape,
    poisson_square,
    registry,
)
from pinnspectral.quadrature import build_rule


def _fd_laplacian(u, X, h=1e-4):
    out = np.zeros(len(X))
    for i in range(X.shape[1]):
        e = np.zeros(X.shape[1])
        e[i] = h
        out += (u(X + e) - 2 * u(X) + u(X - e)) / h**2
    return out


def _fd_grad(u, X, h=1e-6):
    cols = []
    for i in range(X.shape[1]):
        e = np.zeros(X.shape[1])
        e[i] = h
        cols.append((u(X + e) - u(X - e)) / (2 * h))
    return np.column_stack(cols)


@pytest.mark.parametrize("factory", [poisson_1d, poisson_square, poisson_lshape])
def test_poisson_forcing_and_boundary(factory):
    prob = factory()
    rng = np.random.default_rng(0)
    X = prob.domain.sample_interior(60, rng)
    np.testing.assert_allclose(-_fd_laplacian(prob.exact, X), prob.f(X), atol=1e-5)
    np.testing.assert_allclose(prob.exact_laplacian(X), -prob.f(X), atol=1e-12)
    np.testing.assert_allclose(prob.exact_grad(X), _fd_grad(prob.exact, X), atol=1e-8)
    rule = build_rule(prob.domain, 6)
    np.testing.assert_array_equal(prob.g(rule.boundary_nodes), prob.exact(rule.boundary_nodes))


def test_poisson_1d_closed_form():
    prob = poisson_1d()
    np.testing.assert_allclose(prob.exact(np.array([[-1.0], [1.0]])), [0.0, 2.0], atol=1e-15)
    x = np.linspace(-1, 1, 7)[:, None]
    expected = np.sin(6 * x[:, 0]) / 36 + (1 - np.sin(6) / 36) * x[:, 0] + 1
    np.testing.assert_array_equal(prob.exact(x), expected)


@pytest.mark.parametrize("factory", [heat_1d, heat_square, heat_lshape])
def test_heat_forcing(factory):
    prob = factory()
    X = prob.domain.sample_interior(40, np.random.default_rng(1))
    for t in (0.0, 0.37, 1.0):
        h = 1e-5
        u_t = (prob.exact(t + h, X) - prob.exact(t - h, X)) / (2 * h)
        lap = _fd_laplacian(lambda Y: prob.exact(t, Y), X)
        np.testing.assert_allclose(u_t - lap, prob.f(t, X), atol=1e-4 * max(1, np.abs(prob.f(t, X)).max()))
        np.testing.assert_allclose(prob.exact_grad(t, X), _fd_grad(lambda Y: prob.exact(t, Y), X), atol=1e-7)
    np.testing.assert_array_equal(prob.u0(X), prob.exact(0.0, X))
    np.testing.assert_array_equal(prob.g(0.5, X), prob.exact(0.5, X))
    assert not prob.is_steady


@pytest.mark.parametrize("nu", [0.05, 0.1, 0.3])
def test_burgers_profile_solves_steady_equation(nu):
    u, du, d2u = burgers_profile(nu)
    X = np.linspace(-1, 1, 101)[:, None]
    np.testing.assert_allclose(nu * d2u(X), u(X) * du(X)[:, 0], atol=1e-10)
    np.testing.assert_allclose(du(X), _fd_grad(u, X), atol=1e-6)


def test_burgers_problem():
    prob = burgers_steady()
    assert prob.is_steady and prob.k == 0.1 and prob.params == {"nu": 0.1}
    ends = np.array([[-1.0], [1.0]])
    np.testing.assert_allclose(prob.g(0.0, ends), prob.reference(ends))
    # initial state: the straight line through the boundary values
    np.testing.assert_allclose(prob.u0(ends), prob.reference(ends))
    mid = prob.u0(np.array([[0.0]]))
    assert mid[0] == pytest.approx(prob.reference(ends).mean())
    u = np.array([2.0, -1.0])
    gu = np.array([[3.0], [0.5]])
    np.testing.assert_array_equal(prob.nonlinearity(u, gu), [-6.0, 0.5])


def test_pb_problem():
    prob = pb_steady(K=2.0, g_plus=2.0, g_minus=-3.0)
    ends = np.array([[-1.0], [1.0]])
    np.testing.assert_array_equal(prob.g(0.0, ends), [-3.0, 2.0])
    np.testing.assert_allclose(prob.u0(ends), [-3.0, 2.0])
    np.testing.assert_allclose(prob.nonlinearity(np.array([0.5]), np.zeros((1, 1))), [-4 * np.sinh(0.5)])
    assert prob.reference is None and prob.is_steady


def test_registry():
    assert set(PROBLEM_IDS) == {"poisson_1d", "poisson_square", "poisson_lshape", "heat_1d", "heat_square",
                                "heat_lshape", "burgers_steady", "pb_steady"}
    assert set(registry()) == set(PROBLEM_IDS)
    assert isinstance(get_problem("poisson_square"), PoissonProblem)
    assert isinstance(get_problem("pb_steady", K=1.5), EvolutionProblem)
    assert get_problem("burgers_steady", nu=0.2).k == 0.2
    with pytest.raises(KeyError, match="known"):
        get_problem("wave_1d")


def test_from_poisson():
    prob = EvolutionProblem.from_poisson(poisson_1d())
    X = np.linspace(-1, 1, 5)[:, None]
    np.testing.assert_array_equal(prob.f(3.0, X), poisson_1d().f(X))
    np.testing.assert_array_equal(prob.reference(X), poisson_1d().exact(X))
    np.testing.assert_array_equal(prob.u0(X), 0.0)
    variable = PoissonProblem(poisson_1d().domain, f=np.sin, g=np.cos, k=lambda X: 1 + X[:, 0] ** 2)
    with pytest.raises(ValueError):
        EvolutionProblem.from_poisson(variable)


def test_diffusion_helpers():
    X = np.zeros((3, 2))
    prob = poisson_square()
    np.testing.assert_array_equal(prob.k_at(X), 1.0)
    np.testing.assert_array_equal(prob.grad_k_at(X), 0.0)
    missing = PoissonProblem(prob.domain, f=prob.f, g=prob.g, k=lambda X: np.ones(len(X)))
    with pytest.raises(ValueError):
        missing.grad_k_at(X)
