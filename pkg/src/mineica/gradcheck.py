"""Central finite-difference verification of every differentiable operation,
including the whitening backward and the full estimator loss.

Each case builds a scalar loss from one designated input, compares the
backpropagated gradient against central differences, and reports the worst
relative error over coordinates whose gradient magnitude is above a floor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff, mine, nn
from .autodiff import Tensor

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
ACTIVE_GRADIENT_FLOOR = 1e-8


@dataclass
class OpCheck:
    name: str
    max_rel_error: float

    def passed(self, tolerance: float = DEFAULT_TOLERANCE) -> bool:
        return self.max_rel_error < tolerance


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray,
                     step: float = DEFAULT_STEP) -> np.ndarray:
    """Central finite differences of a scalar function, coordinate by
    coordinate."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for k in range(flat.size):
        original = flat[k]
        flat[k] = original + step
        upper = f(x)
        flat[k] = original - step
        lower = f(x)
        flat[k] = original
        out[k] = (upper - lower) / (2.0 * step)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray,
                       floor: float = ACTIVE_GRADIENT_FLOOR) -> float:
    """Worst |a - n| / max(|a|, |n|) over coordinates above the floor."""
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    active = scale > floor
    if not active.any():
        return 0.0
    return float((np.abs(analytic - numeric)[active] / scale[active]).max())


def check_gradient(build_loss: Callable[[Tensor], Tensor], x: np.ndarray,
                   step: float = DEFAULT_STEP) -> float:
    """Compare backprop against finite differences for the gradient of
    ``build_loss`` with respect to its tensor argument."""
    leaf = Tensor(x, requires_grad=True)
    loss = build_loss(leaf)
    autodiff.backward(loss)
    analytic = leaf.grad.copy()

    def value(values: np.ndarray) -> float:
        with autodiff.no_grad():
            return build_loss(Tensor(values)).item()

    numeric = numeric_gradient(value, x.copy(), step)
    return max_relative_error(analytic, numeric)


def _weighted_sum(t: Tensor, weights: np.ndarray) -> Tensor:
    """Scalar probe sum(t * weights); non-uniform weights expose gradient
    structure that a plain mean would average away."""
    w = Tensor(weights)
    size = Tensor([[float(t.values.size)]])
    return autodiff.reduce_mean(t * w, "all") * size


def run_suite(seed: int = 0) -> list[OpCheck]:
    """Finite-difference checks for every differentiable operation."""
    rng = np.random.default_rng(seed)
    checks: list[OpCheck] = []

    def probe(rows: int, cols: int) -> np.ndarray:
        return rng.standard_normal((rows, cols))

    def record(name: str, build: Callable[[Tensor], Tensor], x: np.ndarray) -> None:
        checks.append(OpCheck(name, check_gradient(build, x)))

    # matmul, both operand positions
    b_fixed = Tensor(probe(4, 2))
    w_m = probe(3, 2)
    record("matmul_left", lambda a: _weighted_sum(a @ b_fixed, w_m), probe(3, 4))
    a_fixed = Tensor(probe(3, 4))
    record("matmul_right", lambda b: _weighted_sum(a_fixed @ b, w_m), probe(4, 2))

    # elementwise binary ops, equal shapes and row broadcast
    other = Tensor(probe(4, 3))
    w_e = probe(4, 3)
    record("add", lambda a: _weighted_sum(a + other, w_e), probe(4, 3))
    record("sub", lambda a: _weighted_sum(other - a, w_e), probe(4, 3))
    record("mul", lambda a: _weighted_sum(a * other, w_e), probe(4, 3))
    base = Tensor(probe(4, 3))
    record("add_broadcast", lambda row: _weighted_sum(base + row, w_e), probe(1, 3))
    record("sub_broadcast", lambda row: _weighted_sum(base - row, w_e), probe(1, 3))
    record("neg", lambda a: _weighted_sum(-a, w_e), probe(4, 3))

    # unary elementwise; relu probes sit away from the kink
    relu_input = probe(4, 3)
    relu_input[np.abs(relu_input) < 0.1] += 0.2
    record("relu", lambda a: _weighted_sum(autodiff.relu(a), w_e), relu_input)
    record("exp", lambda a: _weighted_sum(autodiff.exp(a), w_e), probe(4, 3))
    record("log", lambda a: _weighted_sum(autodiff.log(a), w_e),
           np.abs(probe(4, 3)) + 0.5)

    # reductions
    record("reduce_mean_all",
           lambda a: _weighted_sum(autodiff.reduce_mean(a, "all"), np.array([[1.7]])),
           probe(5, 3))
    w_rows = probe(1, 3)
    record("reduce_mean_rows",
           lambda a: _weighted_sum(autodiff.reduce_mean(a, "rows"), w_rows),
           probe(5, 3))

    # concatenation / splitting round trip (4x3 and 4x2 pair)
    right_part = Tensor(probe(4, 2))
    w_c = probe(4, 5)
    record("concat_cols",
           lambda a: _weighted_sum(autodiff.concat_cols(a, right_part), w_c),
           probe(4, 3))

    def split_loss(a: Tensor) -> Tensor:
        left, right = autodiff.split_cols(a, 3)
        return _weighted_sum(left, w_c[:, :3]) + _weighted_sum(right, w_c[:, 3:])

    record("split_cols", split_loss, probe(4, 5))

    # row concatenation / block splitting
    bottom_part = Tensor(probe(2, 3))
    w_r = probe(6, 3)
    record("concat_rows",
           lambda a: _weighted_sum(autodiff.concat_rows([a, bottom_part]), w_r),
           probe(4, 3))

    def split_rows_loss(a: Tensor) -> Tensor:
        top, mid, bottom = autodiff.split_rows(a, [2, 3, 1])
        return (_weighted_sum(top, w_r[:2]) + _weighted_sum(mid, w_r[2:5])
                + _weighted_sum(bottom, w_r[5:]))

    record("split_rows", split_rows_loss, probe(6, 3))

    # row gather with a repeated index to exercise scatter accumulation
    gather_idx = np.array([2, 0, 3, 0, 1])
    w_g = probe(5, 3)
    record("gather_rows",
           lambda a: _weighted_sum(autodiff.gather_rows(a, gather_idx), w_g),
           probe(4, 3))

    # linear layer and MLP composites
    layer = nn.LinearLayer(Tensor(probe(4, 3)), Tensor(probe(1, 3)))
    w_l = probe(6, 3)
    record("linear_input", lambda x: _weighted_sum(layer.forward(x), w_l), probe(6, 4))

    x_fixed = Tensor(probe(6, 4))

    def linear_weight_loss(wt: Tensor) -> Tensor:
        return _weighted_sum(nn.LinearLayer(wt, None).forward(x_fixed), w_l)

    record("linear_weights", linear_weight_loss, probe(4, 3))

    w_fixed = Tensor(probe(4, 3))

    def linear_bias_loss(b: Tensor) -> Tensor:
        return _weighted_sum(nn.LinearLayer(w_fixed, b).forward(x_fixed), w_l)

    record("linear_bias", linear_bias_loss, probe(1, 3))

    mlp = nn.Mlp.create([4, 8, 8, 1], np.random.default_rng(seed + 1))
    w_out = probe(6, 1)
    mlp_input = _kink_safe_probe(
        seed, (6, 4), lambda x: _relu_margin(mlp, [x]))
    record("mlp", lambda x: _weighted_sum(mlp.forward(x), w_out), mlp_input)

    # whitening: full gradient through mean and eigendecomposition
    w_w = probe(32, 3)
    whitening = nn.WhiteningLayer(epsilon=1e-8)
    record("whiten", lambda z: _weighted_sum(whitening.forward(z), w_w), probe(32, 3))

    # estimator loss with respect to the encoder output; a narrower net keeps
    # the finite-difference probe clear of relu kinks without changing the
    # op path being checked
    net = mine.build_statistics_network(3, np.random.default_rng(seed + 2),
                                        hidden_units=16, total_layers=4)
    perms = [np.random.default_rng(seed + 3 + i).permutation(6) for i in range(3)]

    def mine_margin(values: np.ndarray) -> float:
        z = Tensor(values)
        batches = []
        for i, perm in enumerate(perms):
            batch = mine.make_mine_batch(z, i, perm)
            batches.extend([batch.joint.values, batch.marginal.values])
        return _relu_margin(net, batches)

    record("mine_loss",
           lambda z: mine.mine_loss_total(net, z, perms),
           _kink_safe_probe(seed + 4, (6, 3), mine_margin))

    # end-to-end: encoder weights through whitening into the estimator loss
    x_obs = Tensor(probe(16, 3))
    perms16 = [np.random.default_rng(seed + 7 + i).permutation(16) for i in range(3)]
    enc_whitening = nn.WhiteningLayer(epsilon=1e-8)

    def encoder_loss(wt: Tensor) -> Tensor:
        z = enc_whitening.forward(x_obs @ wt)
        return mine.mine_loss_total(net, z, perms16)

    def encoder_margin(values: np.ndarray) -> float:
        with autodiff.no_grad():
            z = enc_whitening.forward(x_obs @ Tensor(values))
        return mine_margin_for(net, z, perms16)

    record("encoder_composite", encoder_loss,
           _kink_safe_probe(seed + 8, (3, 3), encoder_margin))

    return checks


def _relu_margin(net: nn.Mlp, batches: Sequence[np.ndarray]) -> float:
    """Smallest |pre-activation| any relu sees over the given input batches.

    Finite differences are only trustworthy when the probe stays on one side
    of every kink, so inputs are resampled until this margin is comfortable.
    """
    margin = np.inf
    with autodiff.no_grad():
        for values in batches:
            out = Tensor(values)
            for layer in net.layers[:-1]:
                pre = layer.forward(out)
                margin = min(margin, float(np.abs(pre.values).min()))
                out = autodiff.relu(pre)
    return margin


def mine_margin_for(net: nn.Mlp, z: Tensor,
                    perms: Sequence[np.ndarray]) -> float:
    batches = []
    with autodiff.no_grad():
        for i, perm in enumerate(perms):
            batch = mine.make_mine_batch(z, i, perm)
            batches.extend([batch.joint.values, batch.marginal.values])
    return _relu_margin(net, batches)


_KINK_MARGIN = 5e-4
_MAX_PROBE_ATTEMPTS = 200


def _kink_safe_probe(seed: int, shape: tuple[int, int],
                     margin_fn: Callable[[np.ndarray], float]) -> np.ndarray:
    """First random probe whose relu margin is safely above the step size."""
    for attempt in range(_MAX_PROBE_ATTEMPTS):
        x = np.random.default_rng((seed, attempt)).standard_normal(shape)
        if margin_fn(x) > _KINK_MARGIN:
            return x
    raise RuntimeError("no kink-safe probe found; widen the margin search")


def worst_check(checks: Sequence[OpCheck]) -> OpCheck:
    return max(checks, key=lambda c: c.max_rel_error)
