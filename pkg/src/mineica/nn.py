"""Network building blocks: dense layers, MLP assembly, parameter
initialization, and the differentiable ZCA whitening layer.

Whitening is ZCA style: output = (z - mean) @ C^{-1/2} with
C = cov(z) + eps*I and the symmetric inverse square root taken via
eigendecomposition. Statistics are recomputed per batch; there are no
running averages.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff
from .autodiff import Tensor
from .errors import ContractError, NumericalError, ShapeError

# Below this eigenvalue gap the Daleckii-Krein divided difference is replaced
# by the derivative at the midpoint (its continuous limit).
_EIGENVALUE_GAP_FLOOR = 1e-10


def _child_seeds(seed, n: int) -> list:
    """Split a seed into n independent children; a Generator is reused as the
    single sequential stream instead."""
    if isinstance(seed, np.random.Generator):
        return [seed] * n
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return list(ss.spawn(n))


def init_params(shape: tuple[int, int], seed, scheme: str = "he_uniform") -> Tensor:
    """Draw an initial weight tensor, deterministic given the seed.

    ``he_uniform`` (bound sqrt(6/fan_in)) for layers followed by relu,
    ``xavier_uniform`` (bound sqrt(6/(fan_in+fan_out))) for purely linear
    layers. ``seed`` may be an int, SeedSequence, or Generator.
    """
    fan_in, fan_out = shape
    if fan_in < 1 or fan_out < 1:
        raise ShapeError(f"invalid parameter shape {shape}")
    if scheme == "he_uniform":
        bound = np.sqrt(6.0 / fan_in)
    elif scheme == "xavier_uniform":
        bound = np.sqrt(6.0 / (fan_in + fan_out))
    else:
        raise ContractError(f"unknown init scheme {scheme!r}")
    rng = np.random.default_rng(seed)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


class LinearLayer:
    """Dense layer y = x @ W (+ b). Weight shape is (in, out)."""

    def __init__(self, weights: Tensor, bias: Tensor | None = None):
        if bias is not None and bias.shape != (1, weights.cols):
            raise ShapeError(f"bias shape {bias.shape} does not match "
                             f"output width {weights.cols}")
        self.weights = weights
        self.bias = bias

    @classmethod
    def create(cls, in_dim: int, out_dim: int, seed,
               scheme: str = "he_uniform", bias: bool = True) -> "LinearLayer":
        weights = init_params((in_dim, out_dim), seed, scheme)
        b = Tensor(np.zeros((1, out_dim)), requires_grad=True) if bias else None
        return cls(weights, b)

    @property
    def in_dim(self) -> int:
        return self.weights.rows

    @property
    def out_dim(self) -> int:
        return self.weights.cols

    def parameters(self) -> list[Tensor]:
        return [self.weights] if self.bias is None else [self.weights, self.bias]

    def forward(self, x: Tensor) -> Tensor:
        if x.cols != self.in_dim:
            raise ShapeError(f"input width {x.cols} != layer input dim {self.in_dim}")
        if self.bias is None:
            return x @ self.weights
        return _affine(x, self.weights, self.bias)


def _affine(x: Tensor, weights: Tensor, bias: Tensor) -> Tensor:
    """x @ W + b as one graph node; equivalent to matmul followed by a
    broadcast add, fused because it is the training loop's hottest path."""
    out_values = x.values @ weights.values
    out_values += bias.values

    def backward_fn(g: np.ndarray) -> None:
        if x.requires_grad:
            autodiff._accumulate(x, g @ weights.values.T, own=True)
        if weights.requires_grad:
            autodiff._accumulate(weights, x.values.T @ g, own=True)
        if bias.requires_grad:
            autodiff._accumulate(bias, g.sum(axis=0, keepdims=True), own=True)

    return autodiff._make(out_values, (x, weights, bias), "affine", backward_fn)


class Mlp:
    """Stack of linear layers with relu between all but after the last."""

    def __init__(self, layers: Sequence[LinearLayer]):
        if not layers:
            raise ContractError("an MLP needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(f"layer dimensions do not chain: "
                                 f"{prev.out_dim} -> {nxt.in_dim}")
        self.layers = list(layers)

    @classmethod
    def create(cls, dims: Sequence[int], seed) -> "Mlp":
        """Build from a dimension chain [in, h1, ..., out]; hidden layers get
        He-uniform init (relu follows them), the final layer Xavier-uniform."""
        if len(dims) < 2:
            raise ContractError("dimension chain needs at least input and output")
        seeds = _child_seeds(seed, len(dims) - 1)
        layers = []
        for k, (d_in, d_out) in enumerate(zip(dims, dims[1:])):
            last = k == len(dims) - 2
            scheme = "xavier_uniform" if last else "he_uniform"
            layers.append(LinearLayer.create(d_in, d_out, seeds[k], scheme))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def forward(self, x: Tensor) -> Tensor:
        out = x
        for layer in self.layers[:-1]:
            out = autodiff.relu(layer.forward(out))
        return self.layers[-1].forward(out)


@dataclass
class WhiteningCache:
    """Forward-pass intermediates needed by the whitening backward."""
    mean: np.ndarray          # 1 x M
    centered: np.ndarray      # B x M
    eigenvalues: np.ndarray   # M
    eigenvectors: np.ndarray  # M x M, columns
    inv_sqrt: np.ndarray      # M x M symmetric C^{-1/2}


@dataclass
class WhiteningLayer:
    """Differentiable per-batch ZCA whitening; holds no trainable parameters.

    After a forward pass ``cache`` retains the batch statistics, which the
    effective-unmixing computation reads back.
    """
    epsilon: float = 1e-8
    cache: WhiteningCache | None = field(default=None, repr=False)

    def forward(self, z: Tensor) -> Tensor:
        return whiten_forward(self, z)


def _whiten_stats(values: np.ndarray, epsilon: float) -> WhiteningCache:
    b, m = values.shape
    mean = values.mean(axis=0, keepdims=True)
    centered = values - mean
    cov = centered.T @ centered / b + epsilon * np.eye(m)
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    if np.any(eigenvalues <= 0.0):
        raise NumericalError(f"regularized covariance not positive definite; "
                             f"eigenvalues {eigenvalues}")
    inv_sqrt = (eigenvectors * eigenvalues ** -0.5) @ eigenvectors.T
    return WhiteningCache(mean, centered, eigenvalues, eigenvectors, inv_sqrt)


def whiten_forward(layer: WhiteningLayer, z: Tensor) -> Tensor:
    """(z - mean) @ C^{-1/2}; requires more batch rows than columns."""
    if z.rows <= z.cols:
        raise ContractError(f"whitening needs batch size > width, got {z.shape}")
    cache = _whiten_stats(z.values, layer.epsilon)
    layer.cache = cache

    def backward_fn(g: np.ndarray) -> None:
        if z.requires_grad:
            autodiff._accumulate(z, whiten_backward(cache, g))

    return autodiff._make(cache.centered @ cache.inv_sqrt, (z,), "whiten", backward_fn)


def whiten_backward(cache: WhiteningCache, g: np.ndarray) -> np.ndarray:
    """Exact gradient of the whitening map.

    Two paths feed the input gradient: the direct product with C^{-1/2},
    and the dependence of C^{-1/2} on the batch via the eigendecomposition
    (Daleckii-Krein divided differences of h(x) = x^{-1/2}). Centering is
    applied last, which also accounts for the mean's dependence on z.
    """
    centered = cache.centered
    q = cache.eigenvectors
    lam = cache.eigenvalues
    batch = centered.shape[0]

    g_centered = g @ cache.inv_sqrt

    # Gradient w.r.t. the inverse square root, pulled back to the covariance.
    g_w = centered.T @ g
    s = q.T @ g_w @ q
    s_sym = (s + s.T) / 2.0
    h = lam ** -0.5
    gaps = lam[:, None] - lam[None, :]
    near_degenerate = np.abs(gaps) < _EIGENVALUE_GAP_FLOOR
    midpoints = (lam[:, None] + lam[None, :]) / 2.0
    k = np.where(near_degenerate,
                 -0.5 * midpoints ** -1.5,
                 (h[:, None] - h[None, :]) / np.where(near_degenerate, 1.0, gaps))
    g_cov = q @ (k * s_sym) @ q.T
    g_centered += centered @ (g_cov + g_cov.T) / batch

    return g_centered - g_centered.mean(axis=0, keepdims=True)


class EncoderModel:
    """Linear map followed by ZCA whitening; the trainable unmixing model."""

    def __init__(self, linear: LinearLayer, whitening: WhiteningLayer):
        if linear.bias is not None:
            # Whitening centers the batch anyway; a bias would be redundant
            # and muddy the effective linear map.
            raise ContractError("encoder linear layer must not carry a bias")
        self.linear = linear
        self.whitening = whitening

    @classmethod
    def create(cls, n_observations: int, n_components: int, seed,
               epsilon: float = 1e-8) -> "EncoderModel":
        linear = LinearLayer.create(n_observations, n_components, seed,
                                    scheme="xavier_uniform", bias=False)
        return cls(linear, WhiteningLayer(epsilon))

    def parameters(self) -> list[Tensor]:
        return self.linear.parameters()

    def forward(self, x: Tensor) -> Tensor:
        return self.whitening.forward(self.linear.forward(x))
