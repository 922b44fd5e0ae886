"""Feed-forward network with optional skip connections and exact Jacobians.

The model is a stack of ``block_count`` blocks followed by a linear head::

    h0 = x
    h_i = act(W_i h_{i-1} + b_i) (+ h_{i-1} when the block is a skip block)
    f  = W_head h_k + b_head

Block 1 maps ``input_dim -> block_width``; later blocks are square.  A block
is a skip block when ``config.skip`` is set and its input and output widths
agree, so with MNIST inputs the first block never skips.

Parameters live in one flat vector: for every layer in order, the weight
matrix (row-major, shape ``(fan_out, fan_in)``) followed by its bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .convex import Generator, fy_loss, fy_loss_grad, link

ACTIVATIONS = ("relu", "tanh", "identity")
SCHEMES = ("he", "xavier", "zero")

MNIST_INPUT_DIM = 784
DEFAULT_WIDTH = 64


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    output_dim: int = 10
    block_count: int = 1
    block_width: int = DEFAULT_WIDTH
    activation: str = "relu"
    skip: bool = False
    arch_label: str | None = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.input_dim < 1 or self.output_dim < 2 or self.block_width < 1:
            raise ValueError("dimensions must be positive and output_dim >= 2")
        if self.block_count < 0:
            raise ValueError("block_count must be >= 0")
        if self.arch_label is not None:
            if self.arch_label not in "abcd" or len(self.arch_label) != 1:
                raise ValueError(f"unknown architecture label {self.arch_label!r}")
            if self.skip != (self.arch_label in "bd"):
                raise ValueError(f"architecture {self.arch_label} requires skip={self.arch_label in 'bd'}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        """(fan_in, fan_out) per layer, blocks first, head last."""
        dims = []
        fan_in = self.input_dim
        for _ in range(self.block_count):
            dims.append((fan_in, self.block_width))
            fan_in = self.block_width
        dims.append((fan_in, self.output_dim))
        return dims

    @property
    def skip_blocks(self) -> list[bool]:
        return [self.skip and i == o for i, o in self.layer_dims[:-1]]

    @property
    def param_count(self) -> int:
        return sum(o * i + o for i, o in self.layer_dims)


def architecture(label: str, k: int, input_dim: int = MNIST_INPUT_DIM, output_dim: int = 10,
                 width: int = DEFAULT_WIDTH, activation: str = "relu") -> ModelConfig:
    """Models a-d: a is a plain MLP, b adds skips, c/d double the width."""
    if label not in ("a", "b", "c", "d"):
        raise ValueError(f"unknown architecture label {label!r}")
    return ModelConfig(
        input_dim=input_dim,
        output_dim=output_dim,
        block_count=k,
        block_width=width * (2 if label in "cd" else 1),
        activation=activation,
        skip=label in "bd",
        arch_label=label,
    )


def unpack(config: ModelConfig, theta) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views ``(W, b)`` into ``theta`` for every layer."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.size != config.param_count:
        raise ValueError(f"theta has shape {theta.shape}, config needs ({config.param_count},)")
    layers = []
    pos = 0
    for fan_in, fan_out in config.layer_dims:
        W = theta[pos:pos + fan_in * fan_out].reshape(fan_out, fan_in)
        pos += fan_in * fan_out
        b = theta[pos:pos + fan_out]
        pos += fan_out
        layers.append((W, b))
    return layers


def init_params(config: ModelConfig, scheme: str = "he", seed: int = 0) -> np.ndarray:
    """He: N(0, 2/fan_in) weights; Xavier: U(+-sqrt(6/(fan_in+fan_out))); biases zero."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown init scheme {scheme!r}")
    theta = np.zeros(config.param_count)
    if scheme == "zero":
        return theta
    rng = np.random.default_rng(seed)
    for W, _ in unpack(config, theta):
        fan_out, fan_in = W.shape
        if scheme == "he":
            W[...] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=W.shape)
        else:
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            W[...] = rng.uniform(-bound, bound, size=W.shape)
    return theta


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "tanh":
        return 1.0 - np.tanh(z) ** 2
    return np.ones_like(z)


def _as_batch(config: ModelConfig, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != config.input_dim:
        raise ValueError(f"input has shape {x.shape}, model expects last dimension {config.input_dim}")
    return X, single


def _forward(config, layers, X):
    """Forward pass keeping what backprop needs: block inputs and pre-activations."""
    inputs, pre = [], []
    h = X
    for (W, b), skip in zip(layers[:-1], config.skip_blocks):
        z = h @ W.T + b
        inputs.append(h)
        pre.append(z)
        a = _act(config.activation, z)
        h = a + h if skip else a
    W, b = layers[-1]
    inputs.append(h)
    return h @ W.T + b, inputs, pre


def _backward(config, layers, inputs, pre, dout, per_row: bool):
    """Reverse pass seeded with ``dout`` = dL/df, one row per input row.

    With ``per_row`` the result is an (R, |theta|) matrix holding the gradient
    of <dout[r], f(X[r])> for each row; otherwise the sum over rows.
    """
    R = dout.shape[0]
    pieces = []  # head first; reversed into parameter order at the end

    def emit(delta, h):
        if per_row:
            h = np.broadcast_to(h, (R, h.shape[1]))
            pieces.append(delta)
            pieces.append(np.einsum("ro,ri->roi", delta, h).reshape(R, -1))
        else:
            pieces.append(delta.sum(axis=0))
            pieces.append((delta.T @ h).ravel())

    emit(dout, inputs[-1])
    dh = dout @ layers[-1][0]
    for bi in range(config.block_count - 1, -1, -1):
        dz = dh * _act_grad(config.activation, pre[bi])
        emit(dz, inputs[bi])
        if bi == 0:
            break
        dh_in = dz @ layers[bi][0]
        if config.skip_blocks[bi]:
            dh_in = dh_in + dh
        dh = dh_in
    pieces.reverse()
    return np.concatenate(pieces, axis=-1)


def forward(config: ModelConfig, theta, x) -> np.ndarray:
    """Scores f(x); ``x`` may be one input or a batch of rows."""
    X, single = _as_batch(config, x)
    f, _, _ = _forward(config, unpack(config, theta), X)
    return f[0] if single else f


def jacobian(config: ModelConfig, theta, x) -> np.ndarray:
    """Exact (|theta|, K) Jacobian of f(x), one reverse pass per output."""
    X, single = _as_batch(config, x)
    if not single:
        raise ValueError("jacobian takes a single input")
    layers = unpack(config, theta)
    _, inputs, pre = _forward(config, layers, X)
    K = config.output_dim
    # every reverse pass sees the same forward state; stack the K seeds as rows
    inputs = [np.broadcast_to(h, (K, h.shape[1])) for h in inputs]
    pre = [np.broadcast_to(z, (K, z.shape[1])) for z in pre]
    rows = _backward(config, layers, inputs, pre, np.eye(K), per_row=True)
    return rows.T.copy()


def jacobians(config: ModelConfig, theta, X) -> np.ndarray:
    """Jacobians for a batch of inputs, shape (B, |theta|, K)."""
    X, _ = _as_batch(config, X)
    layers = unpack(config, theta)
    B, K = X.shape[0], config.output_dim
    _, inputs, pre = _forward(config, layers, X)
    rep = lambda a: np.repeat(a, K, axis=0)
    seeds = np.tile(np.eye(K), (B, 1))
    rows = _backward(config, layers, [rep(h) for h in inputs], [rep(z) for z in pre], seeds, per_row=True)
    return rows.reshape(B, K, -1).transpose(0, 2, 1)


def loss_grad(config: ModelConfig, gen: Generator, theta, x, target) -> np.ndarray:
    """Gradient in theta of d(target, f(x)) for a single input."""
    X, single = _as_batch(config, x)
    if not single:
        raise ValueError("loss_grad takes a single input; use batch_loss_grad")
    layers = unpack(config, theta)
    f, inputs, pre = _forward(config, layers, X)
    dout = fy_loss_grad(gen, np.asarray(target, dtype=np.float64)[None, :], f)
    return _backward(config, layers, inputs, pre, dout, per_row=False)


def batch_loss_grad(config: ModelConfig, gen: Generator, theta, X, targets) -> tuple[float, np.ndarray]:
    """Mean loss and mean gradient over a batch of rows (NaN when the scores overflow)."""
    X, _ = _as_batch(config, X)
    targets = np.asarray(targets, dtype=np.float64)
    layers = unpack(config, theta)
    with np.errstate(over="ignore", invalid="ignore"):
        f, inputs, pre = _forward(config, layers, X)
    if not np.all(np.isfinite(f)):
        return math.nan, np.full(config.param_count, math.nan)
    loss = float(np.mean(fy_loss(gen, targets, f)))
    dout = fy_loss_grad(gen, targets, f) / X.shape[0]
    return loss, _backward(config, layers, inputs, pre, dout, per_row=False)


def predict(config: ModelConfig, gen: Generator, theta, x) -> np.ndarray:
    return link(gen, forward(config, theta, x))
