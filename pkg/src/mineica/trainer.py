"""Alternating push-pull optimization: encoder epochs minimize the summed
mutual-information bound, estimator epochs maximize it, each with the other
network's parameters frozen.

Training is full batch, so whitening statistics are exact per epoch and a
run is deterministic given its seed.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from . import autodiff, mine
from .autodiff import Tensor, set_requires_grad
from .errors import ContractError, NumericalError
from .nn import EncoderModel, Mlp
from .optim import Nadam
from .signals import SignalSet, _format_value

log = logging.getLogger(__name__)

MINE_MODES = ("shared", "copies")
MINE_REINIT_MODES = ("never", "every_outer_iteration")


@dataclass
class TrainConfig:
    encoder_epochs: int = 1000
    mine_epochs_per_encoder_epoch: int = 7
    lr: float = 0.005
    seed: int = 0
    mine_mode: str = "shared"
    mine_reinit: str = "never"
    log_every: int = 100
    whitening_epsilon: float = 1e-8

    def __post_init__(self):
        if self.encoder_epochs < 1:
            raise ContractError("encoder_epochs must be >= 1")
        if self.mine_epochs_per_encoder_epoch < 1:
            raise ContractError("mine_epochs_per_encoder_epoch must be >= 1")
        if self.lr <= 0:
            raise ContractError("lr must be positive")
        if self.log_every < 1:
            raise ContractError("log_every must be >= 1")
        if self.mine_mode not in MINE_MODES:
            raise ContractError(f"mine_mode must be one of {MINE_MODES}")
        if self.mine_reinit not in MINE_REINIT_MODES:
            raise ContractError(f"mine_reinit must be one of {MINE_REINIT_MODES}")


@dataclass
class IterationRecord:
    iteration: int
    loss_after_encoder: float
    loss_after_mine: float
    grad_norm_encoder: float
    grad_norm_mine: float
    ms: float
    mine_phase_losses: list[float] = field(default_factory=list)


@dataclass
class TrainTrace:
    records: list[IterationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def to_csv(self, out: TextIO | str, include_timing: bool = True) -> None:
        """Columns: iter,loss_after_E,loss_after_M,grad_norm_E,grad_norm_M,ms.

        ``include_timing=False`` writes 0 in the ms column; experiment
        artifacts use it so repeated runs are byte-identical.
        """
        if isinstance(out, str):
            with open(out, "w", encoding="utf-8") as fh:
                self.to_csv(fh, include_timing)
            return
        out.write("iter,loss_after_E,loss_after_M,grad_norm_E,grad_norm_M,ms\n")
        for r in self.records:
            ms = r.ms if include_timing else 0.0
            fields = [str(r.iteration)] + [
                _format_value(v) for v in
                (r.loss_after_encoder, r.loss_after_mine,
                 r.grad_norm_encoder, r.grad_norm_mine, ms)]
            out.write(",".join(fields) + "\n")


class TrainingAbort(NumericalError):
    """Raised when a step hits non-finite values; carries partial results."""

    def __init__(self, message: str, trace: TrainTrace, encoder: EncoderModel):
        super().__init__(message)
        self.trace = trace
        self.encoder = encoder


def gradient_norm(params: Sequence[Tensor]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad ** 2).sum())
    return float(np.sqrt(total))


def _unique_params(nets: Sequence[Mlp]) -> list[Tensor]:
    seen: dict[int, Tensor] = {}
    for net in nets:
        for p in net.parameters():
            seen.setdefault(id(p), p)
    return list(seen.values())


def _nets_argument(nets: Sequence[Mlp], m: int):
    return nets[0] if len(nets) == 1 else list(nets)


def _check_finite(loss: Tensor, phase: str) -> float:
    value = loss.item()
    if not np.isfinite(value):
        raise NumericalError(f"non-finite loss {value!r} during {phase} step")
    return value


def encoder_step(encoder: EncoderModel, mine_nets: Sequence[Mlp], x_batch: Tensor,
                 opt_encoder: Nadam, perms: Sequence[np.ndarray]) -> float:
    """One descent step on the encoder with the estimator frozen.

    Returns the loss evaluated at the pre-step parameters.
    """
    mine_params = _unique_params(mine_nets)
    set_requires_grad(mine_params, False)
    try:
        z = encoder.forward(x_batch)
        loss = mine.mine_loss_total(_nets_argument(mine_nets, z.cols), z, perms)
        value = _check_finite(loss, "encoder")
        opt_encoder.zero_grad()
        autodiff.backward(loss)
        opt_encoder.step()
        return value
    finally:
        set_requires_grad(mine_params, True)


def mine_step(encoder: EncoderModel, mine_nets: Sequence[Mlp], x_batch: Tensor,
              opt_mine: Nadam, perms: Sequence[np.ndarray]) -> float:
    """One ascent step on the estimator with the encoder frozen.

    Returns the loss re-evaluated after the update (same permutations).
    """
    encoder_params = encoder.parameters()
    set_requires_grad(encoder_params, False)
    try:
        z = encoder.forward(x_batch)
        nets_arg = _nets_argument(mine_nets, z.cols)
        loss = mine.mine_loss_total(nets_arg, z, perms)
        _check_finite(loss, "estimator")
        opt_mine.zero_grad()
        autodiff.backward(autodiff.neg(loss))
        opt_mine.step()
        with autodiff.no_grad():
            post = mine.mine_loss_total(nets_arg, encoder.forward(x_batch), perms)
        return _check_finite(post, "estimator (post-update)")
    finally:
        set_requires_grad(encoder_params, True)


def _build_mine_nets(m: int, mode: str, init_rng: np.random.Generator) -> list[Mlp]:
    count = 1 if mode == "shared" else m
    return [mine.build_statistics_network(m, init_rng) for _ in range(count)]


def run(config: TrainConfig, signals: SignalSet) -> tuple[EncoderModel, TrainTrace]:
    """Train on the full observation batch per the 1:k alternating schedule.

    Raises TrainingAbort (with the partial trace attached) if any step hits
    non-finite values.
    """
    root = np.random.SeedSequence(config.seed)
    encoder_ss, mine_ss, perm_ss = root.spawn(3)
    perm_rng = np.random.default_rng(perm_ss)
    mine_init_rng = np.random.default_rng(mine_ss)

    m = signals.n_components
    batch_size = signals.n_samples
    x_batch = Tensor(signals.X.T)

    encoder = EncoderModel.create(signals.n_observations, m, encoder_ss,
                                  epsilon=config.whitening_epsilon)
    mine_nets = _build_mine_nets(m, config.mine_mode, mine_init_rng)
    opt_encoder = Nadam(encoder.parameters(), lr=config.lr)
    opt_mine = Nadam(_unique_params(mine_nets), lr=config.lr)

    trace = TrainTrace()
    for iteration in range(1, config.encoder_epochs + 1):
        started = time.perf_counter()
        try:
            perms = mine.draw_permutations(m, batch_size, perm_rng)
            loss_e = encoder_step(encoder, mine_nets, x_batch, opt_encoder, perms)
            grad_norm_e = gradient_norm(encoder.parameters())

            if config.mine_reinit == "every_outer_iteration":
                mine_nets = _build_mine_nets(m, config.mine_mode, mine_init_rng)
                opt_mine = Nadam(_unique_params(mine_nets), lr=config.lr)

            phase_losses = []
            for _ in range(config.mine_epochs_per_encoder_epoch):
                perms = mine.draw_permutations(m, batch_size, perm_rng)
                phase_losses.append(
                    mine_step(encoder, mine_nets, x_batch, opt_mine, perms))
            grad_norm_m = gradient_norm(_unique_params(mine_nets))
        except NumericalError as err:
            raise TrainingAbort(f"aborted at outer iteration {iteration}: {err}",
                                trace, encoder) from err

        trace.records.append(IterationRecord(
            iteration=iteration,
            loss_after_encoder=loss_e,
            loss_after_mine=phase_losses[-1],
            grad_norm_encoder=grad_norm_e,
            grad_norm_mine=grad_norm_m,
            ms=(time.perf_counter() - started) * 1e3,
            mine_phase_losses=phase_losses,
        ))
        if iteration % config.log_every == 0 or iteration == config.encoder_epochs:
            log.info("iter %d: L after E %.4f, after M %.4f",
                     iteration, loss_e, phase_losses[-1])

    return encoder, trace
