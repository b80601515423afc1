"""Shared fixtures.

The trained-artifact fixtures are session-scoped because they are expensive
(minutes of optimization); the acceptance tests and the handful of module
tests that assert on trained behavior all reuse the same runs.
"""

import time

import numpy as np
import pytest

from mineica import cli, evaluation, mine, optim, signals, trainer
from mineica.autodiff import Tensor, backward, neg, no_grad

BENCH_SEEDS = (0, 1, 2, 3, 4)
SHORT_ITERS = 60
LONG_ITERS = 200
GAUSS_RHOS = (0.0, 0.5, 0.9)
GAUSS_N = 5000
GAUSS_EPOCHS = 300


class BenchmarkRun:
    """One full benchmark pipeline run from a single root seed.

    Mirrors the experiment runner's seed split: one child each for signal
    generation, training, and the FastICA baseline.
    """

    def __init__(self, root_seed: int, iters: int):
        started = time.perf_counter()
        self.root_seed = root_seed
        signal_seed, train_seed, fastica_seed = cli.split_seed(root_seed, 3)
        self.signals = signals.benchmark_signals(signal_seed)
        config = trainer.TrainConfig(encoder_epochs=iters, seed=train_seed,
                                     log_every=10**6)
        self.encoder, self.trace = trainer.run(config, self.signals)
        self.mine_result = evaluation.effective_unmixing(self.encoder,
                                                         self.signals.X)
        self.fast_result = evaluation.fastica(self.signals.X,
                                              self.signals.n_components,
                                              seed=fastica_seed)
        self.mine_report = evaluation.evaluate_unmixing(
            self.mine_result, self.signals.S, self.signals.A,
            seed=root_seed, iterations=len(self.trace))
        self.fast_report = evaluation.evaluate_unmixing(
            self.fast_result, self.signals.S, self.signals.A, seed=root_seed)
        self.secs = time.perf_counter() - started


def instrumented_run(config, signal_set):
    """Replay trainer.run's exact loop, also recording each encoder update's
    effect on the loss.

    The total bound measured across outer iterations rises while the
    estimator warms up from random initialization, whatever the encoder
    does, so the encoder's minimize side of the game is only observable at
    the step level: loss immediately after an encoder update minus loss
    immediately before it, under the same permutations and estimator
    parameters. That evaluation runs under no_grad and draws no randomness,
    leaving the trajectory bit-identical to trainer.run on the same inputs
    (test_trainer.py asserts this).

    Returns (encoder, trace, encoder_step_deltas).
    """
    root = np.random.SeedSequence(config.seed)
    encoder_ss, mine_ss, perm_ss = root.spawn(3)
    perm_rng = np.random.default_rng(perm_ss)
    mine_init_rng = np.random.default_rng(mine_ss)

    m = signal_set.n_components
    batch_size = signal_set.n_samples
    x_batch = Tensor(signal_set.X.T)

    encoder = trainer.EncoderModel.create(signal_set.n_observations, m,
                                          encoder_ss,
                                          epsilon=config.whitening_epsilon)
    mine_nets = trainer._build_mine_nets(m, config.mine_mode, mine_init_rng)
    opt_encoder = optim.Nadam(encoder.parameters(), lr=config.lr)
    opt_mine = optim.Nadam(trainer._unique_params(mine_nets), lr=config.lr)

    trace = trainer.TrainTrace()
    deltas = []
    for iteration in range(1, config.encoder_epochs + 1):
        perms = mine.draw_permutations(m, batch_size, perm_rng)
        loss_e = trainer.encoder_step(encoder, mine_nets, x_batch,
                                      opt_encoder, perms)
        with no_grad():
            nets_arg = mine_nets[0] if len(mine_nets) == 1 else list(mine_nets)
            post = mine.mine_loss_total(nets_arg, encoder.forward(x_batch),
                                        perms).item()
        deltas.append(post - loss_e)
        grad_norm_e = trainer.gradient_norm(encoder.parameters())

        if config.mine_reinit == "every_outer_iteration":
            mine_nets = trainer._build_mine_nets(m, config.mine_mode,
                                                 mine_init_rng)
            opt_mine = optim.Nadam(trainer._unique_params(mine_nets),
                                   lr=config.lr)

        phase_losses = []
        for _ in range(config.mine_epochs_per_encoder_epoch):
            perms = mine.draw_permutations(m, batch_size, perm_rng)
            phase_losses.append(
                trainer.mine_step(encoder, mine_nets, x_batch, opt_mine, perms))
        grad_norm_m = trainer.gradient_norm(trainer._unique_params(mine_nets))

        trace.records.append(trainer.IterationRecord(
            iteration=iteration,
            loss_after_encoder=loss_e,
            loss_after_mine=phase_losses[-1],
            grad_norm_encoder=grad_norm_e,
            grad_norm_mine=grad_norm_m,
            ms=0.0,
            mine_phase_losses=phase_losses,
        ))
    return encoder, trace, deltas


class DynamicsRun:
    """A long instrumented benchmark run for push-pull trend checks."""

    def __init__(self, root_seed: int, iters: int):
        self.root_seed = root_seed
        signal_seed, train_seed, _ = cli.split_seed(root_seed, 3)
        self.signals = signals.benchmark_signals(signal_seed)
        config = trainer.TrainConfig(encoder_epochs=iters, seed=train_seed,
                                     log_every=10**6)
        self.encoder, self.trace, self.encoder_deltas = instrumented_run(
            config, self.signals)

    def mine_phase_rises(self):
        return [r.mine_phase_losses[-1] - r.mine_phase_losses[0]
                for r in self.trace.records]

    def loss_after_encoder_series(self):
        return [r.loss_after_encoder for r in self.trace.records]


@pytest.fixture
def instrumented_runner():
    return instrumented_run


@pytest.fixture(scope="session")
def bench_runs_short():
    """Five benchmark runs at the separation-quality budget."""
    return [BenchmarkRun(seed, SHORT_ITERS) for seed in BENCH_SEEDS]


@pytest.fixture(scope="session")
def dynamics_runs():
    """Five instrumented benchmark runs for the push-pull dynamics checks."""
    return [DynamicsRun(seed, LONG_ITERS) for seed in BENCH_SEEDS]


_GAUSS_TIMINGS: dict[float, float] = {}


@pytest.fixture(scope="session")
def gaussian_runs():
    """Trained Gaussian-pair estimators keyed by correlation coefficient."""
    results = {}
    for rho in GAUSS_RHOS:
        started = time.perf_counter()
        results[rho] = cli.train_gaussian_mi(rho, GAUSS_N, GAUSS_EPOCHS,
                                             seed=0)
        _GAUSS_TIMINGS[rho] = time.perf_counter() - started
    return results


@pytest.fixture(scope="session")
def gaussian_timings(gaussian_runs):
    """Wall seconds per correlation, populated alongside gaussian_runs."""
    return dict(_GAUSS_TIMINGS)


@pytest.fixture(scope="session")
def independent_mine_losses():
    """Per-epoch total-bound values from training the estimator alone on
    independent standard-normal columns (no encoder in the loop)."""
    data_ss, net_ss, perm_ss = np.random.SeedSequence(7).spawn(3)
    z = Tensor(np.random.default_rng(data_ss).standard_normal((2000, 3)))
    net = mine.build_statistics_network(3, net_ss)
    opt = optim.Nadam(net.parameters())
    perm_rng = np.random.default_rng(perm_ss)
    values = []
    for _ in range(150):
        perms = mine.draw_permutations(3, 2000, perm_rng)
        loss = mine.mine_loss_total(net, z, perms)
        values.append(loss.item())
        opt.zero_grad()
        backward(neg(loss))
        opt.step()
    return values


@pytest.fixture
def small_signals():
    """A miniature benchmark set for step-level tests (fast, still B > M)."""
    return signals.make_signal_set(signals.default_specs(),
                                   signals.BENCHMARK_MIXING_MATRIX,
                                   n_samples=96, duration=8.0, seed=0)
