"""Full-batch Adam training of the feature network as a PINN."""

import logging
from dataclasses import dataclass, asdict

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .network import FeatureNetwork, init_network

__all__ = ["TrainConfig", "TrainingDiverged", "sample_points", "pinn_loss", "pinn_loss_and_grad", "train_adam", "PINNRegressor"]

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    epochs: int = 5000
    n_collocation: int = 2000
    n_boundary: int = 400
    boundary_weight: float = 1.0
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.n_collocation < 1 or self.n_boundary < 1:
            raise ValueError("point counts must be at least 1")
        if not self.boundary_weight > 0:
            raise ValueError("boundary_weight must be positive")

    def to_dict(self):
        return asdict(self)


def sample_points(domain, config):
    """Collocation and boundary points, drawn once from ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    interior = domain.sample_interior(config.n_collocation, rng)
    boundary = domain.sample_boundary(config.n_boundary, rng)
    return interior, boundary


def _pde_residual(net, problem, X):
    u, gu, lap = net.output_derivatives(X)
    res = -problem.k_at(X) * lap - problem.f(X)
    if callable(problem.k):
        res -= np.einsum("nd,nd->n", problem.grad_k_at(X), gu)
    return res


def pinn_loss(net, problem, collocation, boundary, boundary_weight=1.0):
    """Mean squared PDE residual plus weighted mean squared boundary mismatch."""
    if len(collocation) == 0 or len(boundary) == 0:
        raise ValueError("empty point set")
    res = _pde_residual(net, problem, collocation)
    mis = net.forward(boundary) - problem.g(boundary)
    return float(np.mean(res**2) + boundary_weight * np.mean(mis**2))


def pinn_loss_and_grad(net, problem, collocation, boundary, boundary_weight=1.0):
    """Loss value and its gradient w.r.t. the flat parameter vector."""
    n, m = len(collocation), len(boundary)
    variable_k = callable(problem.k)
    tape = net.record(collocation, order=2)
    k = problem.k_at(collocation)
    res = -k * tape.lap - problem.f(collocation)
    if variable_k:
        gk = problem.grad_k_at(collocation)
        res -= np.einsum("nd,nd->n", gk, tape.grad)
    btape = net.record(boundary, order=0)
    mis = btape.u - problem.g(boundary)
    loss = np.mean(res**2) + boundary_weight * np.mean(mis**2)

    d_grad = -2.0 * gk * (res / n)[:, None] if variable_k else None
    g_int = net.reverse(tape, d_grad=d_grad, d_lap=-2.0 * k * res / n)
    g_bdry = net.reverse(btape, d_value=2.0 * boundary_weight * mis / m)
    flat = np.concatenate([
        np.concatenate([(dWi + dWb).ravel(), dbi + dbb])
        for (dWi, dbi), (dWb, dbb) in zip(g_int, g_bdry)
    ])
    return float(loss), flat


def train_adam(net, problem, config, callback=None, log_every=500):
    """Train ``net`` (a copy is returned) with full-batch Adam.

    Returns
    -------
    net : FeatureNetwork
    history : ndarray of shape (epochs + 1,)
        Loss before each update and the final loss.

    Raises
    ------
    TrainingDiverged
        If the loss or gradient becomes non-finite.
    """
    net = net.copy()
    X, Xb = sample_points(problem.domain, config)
    theta = net.get_flat_params()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2 = config.beta1, config.beta2
    history = np.empty(config.epochs + 1)
    for epoch in range(config.epochs):
        loss, grad = pinn_loss_and_grad(net, problem, X, Xb, config.boundary_weight)
        if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
            raise TrainingDiverged(f"non-finite loss or gradient at epoch {epoch}")
        history[epoch] = loss
        m = b1 * m + (1 - b1) * grad
        v = b2 * v + (1 - b2) * grad**2
        mhat = m / (1 - b1 ** (epoch + 1))
        vhat = v / (1 - b2 ** (epoch + 1))
        theta = theta - config.learning_rate * mhat / (np.sqrt(vhat) + config.eps)
        net.set_flat_params(theta)
        if log_every and epoch % log_every == 0:
            logger.info("epoch %d loss %.3e", epoch, loss)
        if callback is not None:
            callback(epoch, loss)
    history[-1] = pinn_loss(net, problem, X, Xb, config.boundary_weight)
    if not np.isfinite(history[-1]):
        raise TrainingDiverged("non-finite loss after the final update")
    return net, history


class PINNRegressor(RegressorMixin, BaseEstimator):
    """PINN for a Poisson problem; ``fit`` trains, ``predict`` evaluates the network.

    Parameters
    ----------
    layer_dims : sequence of int
        Widths ``{d_0, ..., d_L, 1}``.
    learning_rate, epochs, n_collocation, n_boundary, boundary_weight :
        See :class:`TrainConfig`.
    random_state : int
        Seeds both the initialization and the point sampling.
    """

    def __init__(self, layer_dims=(1, 30, 30, 1), learning_rate=1e-3, epochs=5000,
                 n_collocation=2000, n_boundary=400, boundary_weight=1.0, random_state=0):
        self.layer_dims = layer_dims
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.n_collocation = n_collocation
        self.n_boundary = n_boundary
        self.boundary_weight = boundary_weight
        self.random_state = random_state

    def _config(self):
        return TrainConfig(self.learning_rate, self.epochs, self.n_collocation,
                           self.n_boundary, self.boundary_weight, self.random_state)

    def fit(self, problem, init=None):
        net = init if isinstance(init, FeatureNetwork) else init_network(self.layer_dims, self.random_state)
        self.network_, self.loss_history_ = train_adam(net, problem, self._config())
        return self

    def predict(self, X):
        check_is_fitted(self)
        return self.network_.forward(X)
