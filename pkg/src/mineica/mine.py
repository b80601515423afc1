"""Neural mutual-information estimation: statistics network and the
Donsker-Varadhan lower bound, summed over singled-out components.

For encoder output z (batch x M) and component i, the estimator sees pairs
(z_i, z_-i) with the singled-out column always in the first input slot.
Joint samples pair a row's own z_i with its z_-i; product-of-marginals
samples permute the z_i column within the batch.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff
from .autodiff import Tensor
from .errors import ContractError
from .nn import Mlp

HIDDEN_UNITS = 64
TOTAL_LAYERS = 7


def build_statistics_network(n_components: int, seed,
                             hidden_units: int = HIDDEN_UNITS,
                             total_layers: int = TOTAL_LAYERS) -> Mlp:
    """MLP mapping a (z_i, z_-i) row of width M to a scalar score."""
    if n_components < 2:
        raise ContractError("need at least 2 components")
    dims = [n_components] + [hidden_units] * (total_layers - 1) + [1]
    return Mlp.create(dims, seed)


@dataclass
class MineBatch:
    """Joint and marginal input batches for one singled-out component."""
    joint: Tensor
    marginal: Tensor
    component: int
    permutation: np.ndarray


def _column_partition(z: Tensor, i: int) -> tuple[Tensor, Tensor]:
    """Split z into (column i, remaining columns in original order)."""
    m = z.cols
    if i == 0:
        return autodiff.split_cols(z, 1)
    if i == m - 1:
        others, col = autodiff.split_cols(z, m - 1)
        return col, others
    left, rest = autodiff.split_cols(z, i)
    col, right = autodiff.split_cols(rest, 1)
    return col, autodiff.concat_cols(left, right)


def make_mine_batch(z: Tensor, i: int, perm: Sequence[int] | np.ndarray) -> MineBatch:
    """Build the estimator inputs for component i on the autodiff graph.

    Joint rows are (z[b,i], z[b,-i]); marginal rows replace the first slot
    with z[perm[b],i]. Gradients flow back into z through both batches.
    """
    if not 0 <= i < z.cols:
        raise ContractError(f"component index {i} out of range for width {z.cols}")
    perm = np.asarray(perm, dtype=np.intp)
    if perm.shape != (z.rows,) or not np.array_equal(np.sort(perm), np.arange(z.rows)):
        raise ContractError("perm must be a permutation of the batch rows")
    if z.cols < 2:
        raise ContractError("need at least 2 columns to single one out")

    col, others = _column_partition(z, i)
    joint = autodiff.concat_cols(col, others)
    marginal = autodiff.concat_cols(autodiff.gather_rows(col, perm), others)
    return MineBatch(joint, marginal, i, perm)


def log_mean_exp(t: Tensor) -> Tensor:
    """log(mean(exp(t))) over all entries, max-shifted for overflow safety."""
    peak = float(t.values.max())
    shifted = t - Tensor(np.full(t.shape, peak))
    return (autodiff.log(autodiff.reduce_mean(autodiff.exp(shifted), "all"))
            + Tensor([[peak]]))


def _bound_from_scores(t_joint: Tensor, t_marginal: Tensor) -> Tensor:
    return autodiff.reduce_mean(t_joint, "all") - log_mean_exp(t_marginal)


def mine_loss_component(net: Mlp, batch: MineBatch) -> Tensor:
    """Donsker-Varadhan bound for one component:
    mean score on the joint batch minus log-mean-exp on the marginal batch.

    Both batches go through the network as one stacked pass; the bound is
    identical, the matmuls larger and fewer.
    """
    stacked = autodiff.concat_rows([batch.joint, batch.marginal])
    t_joint, t_marginal = autodiff.split_rows(net.forward(stacked),
                                              [batch.joint.rows,
                                               batch.marginal.rows])
    return _bound_from_scores(t_joint, t_marginal)


def draw_permutations(n_components: int, batch_size: int,
                      rng: np.random.Generator) -> list[np.ndarray]:
    """One independent within-batch permutation per component."""
    return [rng.permutation(batch_size) for _ in range(n_components)]


def mine_loss_total(nets: Mlp | Sequence[Mlp], z: Tensor,
                    perms: Sequence[np.ndarray]) -> Tensor:
    """Sum of per-component bounds over every singled-out component.

    ``nets`` is either one shared statistics network or a list of M
    independent copies (one per component).
    """
    m = z.cols
    if m < 2:
        raise ContractError("mutual information needs at least 2 components")
    if len(perms) != m:
        raise ContractError(f"need {m} permutations, got {len(perms)}")
    if isinstance(nets, Mlp):
        # One shared network scores every component's joint and marginal
        # batch in a single stacked pass.
        batches = [make_mine_batch(z, i, perms[i]) for i in range(m)]
        inputs = []
        for batch in batches:
            inputs.extend([batch.joint, batch.marginal])
        scores = nets.forward(autodiff.concat_rows(inputs))
        parts = autodiff.split_rows(scores, [z.rows] * (2 * m))
        total = None
        for i in range(m):
            component = _bound_from_scores(parts[2 * i], parts[2 * i + 1])
            total = component if total is None else total + component
        return total

    if len(nets) != m:
        raise ContractError(f"need {m} network copies, got {len(nets)}")
    total = None
    for i in range(m):
        component = mine_loss_component(nets[i], make_mine_batch(z, i, perms[i]))
        total = component if total is None else total + component
    return total
