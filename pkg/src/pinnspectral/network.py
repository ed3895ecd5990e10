"""Fully connected tanh network with exact input derivatives.

The network maps ``x`` in R^d to a scalar through ``L`` tanh layers and a
final affine layer without activation, so the output is a linear
combination of the last hidden layer.  Values, input gradients and
per-axis second derivatives are propagated forward together, which is
cheap because the input dimension is at most two.
"""

import hashlib
import json

import numpy as np

__all__ = ["FeatureNetwork", "init_network", "load_network"]

FORMAT_VERSION = 1


def _check_dims(layer_dims):
    dims = [int(d) for d in layer_dims]
    if len(dims) < 3:
        raise ValueError(f"need at least one hidden layer, got dims {dims}")
    if any(d < 1 for d in dims):
        raise ValueError(f"layer widths must be positive, got {dims}")
    if dims[-1] != 1:
        raise ValueError(f"output width must be 1, got {dims[-1]}")
    if dims[0] not in (1, 2):
        raise ValueError(f"input dimension must be 1 or 2, got {dims[0]}")
    return dims


class FeatureNetwork:
    """Tanh network ``D = {d_0, ..., d_L, 1}`` exposing last-layer features.

    Parameters
    ----------
    layer_dims : sequence of int
    weights : list of ndarray
        ``weights[l]`` has shape ``(d_{l+1}, d_l)``.
    biases : list of ndarray
        ``biases[l]`` has shape ``(d_{l+1},)``.
    seed : int, optional
        Seed used to initialize the parameters, kept for provenance.
    """

    def __init__(self, layer_dims, weights, biases, seed=None):
        self.layer_dims = _check_dims(layer_dims)
        if len(weights) != len(self.layer_dims) - 1 or len(biases) != len(weights):
            raise ValueError("number of weight/bias arrays does not match layer_dims")
        self.weights = [np.array(W, dtype=float) for W in weights]
        self.biases = [np.array(b, dtype=float).reshape(-1) for b in biases]
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[l + 1], self.layer_dims[l])
            if W.shape != shape or b.shape != (shape[0],):
                raise ValueError(f"layer {l}: expected W {shape}, got {W.shape} / b {b.shape}")
        self.seed = seed

    @property
    def input_dim(self):
        return self.layer_dims[0]

    @property
    def n_features(self):
        """Number of features including the constant one, ``d_L + 1``."""
        return self.layer_dims[-2] + 1

    @property
    def output_weights(self):
        """Coefficients ``w_j`` with ``u = sum_j w_j phi_j``."""
        return np.concatenate([self.biases[-1], self.weights[-1][0]])

    @property
    def n_params(self):
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def copy(self):
        return FeatureNetwork(self.layer_dims, self.weights, self.biases, self.seed)

    # -- parameter vector helpers (used by the optimizer) --------------------

    def get_flat_params(self):
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    def set_flat_params(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {theta.size}")
        pos = 0
        for l, W in enumerate(self.weights):
            n = W.size
            self.weights[l] = theta[pos:pos + n].reshape(W.shape).copy()
            pos += n
            m = self.biases[l].size
            self.biases[l] = theta[pos:pos + m].copy()
            pos += m

    # -- evaluation ----------------------------------------------------------

    def _as_points(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if self.input_dim == 1 else X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ValueError(f"expected points of dimension {self.input_dim}, got shape {X.shape}")
        return X

    def _hidden(self, X, order=0, keep=False, per_axis=False):
        """Propagate values and input derivatives through the hidden layers.

        Returns ``(z, G, H)`` for the last hidden layer: ``G[i]`` holds
        ``dz/dx_i`` with shape (n, d_L).  ``H`` is the Laplacian of ``z``,
        or with ``per_axis`` a list of the second derivatives along each
        axis.  ``keep`` also returns the per-layer tape used by
        :meth:`reverse` (Laplacian form only).
        """
        n, d = X.shape
        z = X
        G = H = None
        if order >= 1:
            G = [np.broadcast_to(np.eye(d)[i], (n, d)) for i in range(d)]
        if order >= 2:
            H = [np.zeros((n, d)) for _ in range(d)] if per_axis else np.zeros((n, d))
        tape = []
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            Wt = W.T
            zn = np.tanh(z @ Wt + b)
            s = 1.0 - zn * zn
            Ga = [g @ Wt for g in G] if order >= 1 else None
            if order >= 2:
                t2 = -2.0 * zn * s
                if per_axis:
                    H = [s * (h @ Wt) + t2 * ga * ga for h, ga in zip(H, Ga)]
                else:
                    Ha = H @ Wt
                    Q = sum(ga * ga for ga in Ga)
                    if keep:
                        tape.append((z, G, H, zn, s, Ga, Ha, Q))
                    H = s * Ha + t2 * Q
            elif keep:
                tape.append((z, G, None, zn, s, Ga, None, None))
            if order >= 1:
                G = [s * ga for ga in Ga]
            z = zn
        return (z, G, H, tape) if keep else (z, G, H)

    def forward(self, X):
        """Network output at points ``X`` of shape (n, d)."""
        X = self._as_points(X)
        z, _, _ = self._hidden(X)
        return z @ self.weights[-1][0] + self.biases[-1][0]

    __call__ = forward

    def features(self, X):
        """Last-hidden-layer features with the constant feature prepended.

        Returns
        -------
        ndarray of shape (n, d_L + 1)
        """
        X = self._as_points(X)
        z, _, _ = self._hidden(X)
        return np.hstack([np.ones((len(X), 1)), z])

    def _pad(self, parts):
        n = len(parts[0])
        out = np.zeros((n, self.n_features, len(parts)))
        for i, p in enumerate(parts):
            out[:, 1:, i] = p
        return out

    def feature_jacobian(self, X):
        """Input gradients of the features.

        Returns
        -------
        ndarray of shape (n, d_L + 1, d)
            ``J[n, j, i] = d phi_j / d x_i``; row 0 is zero.
        """
        X = self._as_points(X)
        _, G, _ = self._hidden(X, order=1)
        return self._pad(G)

    def feature_second_derivatives(self, X):
        """Per-axis second derivatives ``d2 phi_j / d x_i^2``, shape (n, d_L + 1, d)."""
        X = self._as_points(X)
        _, _, H = self._hidden(X, order=2, per_axis=True)
        return self._pad(H)

    def feature_laplacian(self, X):
        """Laplacians of the features, shape (n, d_L + 1)."""
        return self.feature_derivatives(X)[2]

    def feature_derivatives(self, X):
        """Values, gradients and Laplacians of the features in one pass."""
        X = self._as_points(X)
        z, G, H = self._hidden(X, order=2)
        n = len(X)
        vals = np.hstack([np.ones((n, 1)), z])
        laps = np.hstack([np.zeros((n, 1)), H])
        return vals, self._pad(G), laps

    def output_derivatives(self, X):
        """Output value, gradient (n, d) and Laplacian (n,)."""
        tape = self.record(X, order=2)
        return tape.u, tape.grad, tape.lap

    # -- reverse mode --------------------------------------------------------

    def backprop(self, X, d_value=None, d_grad=None, d_lap=None):
        """Gradient of a scalar functional of the outputs w.r.t. all parameters.

        The functional is ``sum_n d_value[n] * u(x_n) + sum_n d_grad[n] .
        grad u(x_n) + sum_n d_lap[n] * lap u(x_n)``; any of the three upstream
        arrays may be omitted.

        Returns
        -------
        list of (dW, db) pairs, aligned with ``weights`` and ``biases``.
        """
        order = 2 if d_lap is not None else (1 if d_grad is not None else 0)
        tape = self.record(X, order)
        return self.reverse(tape, d_value, d_grad, d_lap)

    def record(self, X, order=2):
        """Forward pass keeping the tape for :meth:`reverse`.

        The outputs are available as ``tape.u``, ``tape.grad`` (n, d) and
        ``tape.lap`` (n,) when ``order`` allows.
        """
        X = self._as_points(X)
        z, G, H, layers = self._hidden(X, order=order, keep=True)
        w = self.weights[-1][0]
        u = z @ w + self.biases[-1][0]
        grad = np.column_stack([g @ w for g in G]) if order >= 1 else None
        lap = H @ w if order >= 2 else None
        return _Tape(order, z, G, H, layers, u, grad, lap)

    def reverse(self, tape, d_value=None, d_grad=None, d_lap=None):
        """Reverse sweep over a tape from :meth:`record`."""
        order, z = tape.order, tape.z
        n = len(z)
        d = self.input_dim
        if d_grad is not None and order < 1 or d_lap is not None and order < 2:
            raise ValueError("tape was recorded without the needed derivatives")
        w = self.weights[-1][0]
        dv = np.zeros(n) if d_value is None else np.asarray(d_value, dtype=float)

        dW_out = dv @ z
        zbar = np.outer(dv, w)
        Gbar = Hbar = None
        if order >= 1:
            dg = np.zeros((n, d)) if d_grad is None else np.asarray(d_grad, dtype=float).reshape(n, d)
            dW_out = dW_out + sum(dg[:, i] @ tape.G[i] for i in range(d))
            Gbar = [np.outer(dg[:, i], w) for i in range(d)]
        if order >= 2:
            dl = np.zeros(n) if d_lap is None else np.asarray(d_lap, dtype=float)
            dW_out = dW_out + dl @ tape.H
            Hbar = np.outer(dl, w)
        grads = [(dW_out[None, :], np.array([dv.sum()]))]

        for l in range(len(tape.layers) - 1, -1, -1):
            zin, Gin, Hin, zl, s, Ga, Ha, Q = tape.layers[l]
            W = self.weights[l]
            zt = zbar
            if order >= 1:
                sbar = sum(gb * ga for gb, ga in zip(Gbar, Ga))
                Gabar = [s * gb for gb in Gbar]
            if order >= 2:
                t2 = -2.0 * zl * s
                sbar += Hbar * Ha
                cross = 2.0 * t2 * Hbar
                Gabar = [gab + cross * ga for gab, ga in zip(Gabar, Ga)]
                Habar = s * Hbar
                zt = zt + (Hbar * Q) * (4.0 * zl * zl - 2.0 * s)
            if order >= 1:
                zt = zt - 2.0 * zl * sbar
            abar = zt * s
            dW = abar.T @ zin
            if order >= 1:
                for gab, gin in zip(Gabar, Gin):
                    dW += gab.T @ gin
            if order >= 2 and l > 0:
                dW += Habar.T @ Hin
            grads.append((dW, abar.sum(axis=0)))
            if l > 0:
                zbar = abar @ W
                if order >= 1:
                    Gbar = [gab @ W for gab in Gabar]
                if order >= 2:
                    Hbar = Habar @ W
        return grads[::-1]

    def parameter_gradient(self, x, upstream=1.0):
        """Gradient of ``upstream * u(x)`` w.r.t. the parameters, as a flat vector."""
        X = self._as_points(x)
        dv = np.broadcast_to(np.asarray(upstream, dtype=float), (len(X),))
        return _flatten(self.backprop(X, d_value=dv))

    # -- persistence ---------------------------------------------------------

    def to_dict(self):
        return {
            "format": "pinnspectral-network",
            "version": FORMAT_VERSION,
            "activation": "tanh",
            "layer_dims": self.layer_dims,
            "seed": self.seed,
            "weights": [W.ravel().tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    def save(self, path):
        # json writes floats with repr, which round-trips exactly
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def from_dict(cls, data):
        if data.get("format") != "pinnspectral-network":
            raise ValueError("not a pinnspectral network file")
        dims = data["layer_dims"]
        weights = [np.array(W, dtype=float).reshape(dims[l + 1], dims[l]) for l, W in enumerate(data["weights"])]
        return cls(dims, weights, data["biases"], seed=data.get("seed"))

    def digest(self):
        """SHA-256 of the parameters, for run manifests."""
        h = hashlib.sha256(json.dumps(self.layer_dims).encode())
        for W, b in zip(self.weights, self.biases):
            h.update(np.ascontiguousarray(W).tobytes())
            h.update(np.ascontiguousarray(b).tobytes())
        return h.hexdigest()

    def __repr__(self):
        return f"FeatureNetwork(layer_dims={self.layer_dims}, seed={self.seed})"


class _Tape:
    __slots__ = ("order", "z", "G", "H", "layers", "u", "grad", "lap")

    def __init__(self, order, z, G, H, layers, u, grad, lap):
        self.order, self.z, self.G, self.H, self.layers = order, z, G, H, layers
        self.u, self.grad, self.lap = u, grad, lap


def _flatten(grads):
    return np.concatenate([np.concatenate([dW.ravel(), db]) for dW, db in grads])


def init_network(layer_dims, seed=0):
    """Glorot-uniform weights and zero biases, deterministic in ``seed``."""
    if layer_dims is None or len(layer_dims) == 0:
        raise ValueError("layer_dims must not be empty")
    dims = _check_dims(layer_dims)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return FeatureNetwork(dims, weights, biases, seed=seed)


def load_network(path):
    with open(path) as fh:
        return FeatureNetwork.from_dict(json.load(fh))
