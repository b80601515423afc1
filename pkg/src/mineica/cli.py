"""Command-line experiment runner.

Three subcommands:

* ``run``: generate the benchmark signals, mix, train the encoder against
  the neural MI estimate, run the FastICA baseline, and write CSV/JSON/SVG
  artifacts (exit 0; bad config exit 2; numerical abort exit 3 with partial
  artifacts).
* ``validate-mi``: train the estimator on a correlated bivariate Gaussian
  and compare against the closed-form MI (exit 0 inside the tolerance band,
  1 outside, 3 on divergence).
* ``gradcheck``: run the finite-difference suite over all differentiable
  ops (exit 0 iff every op passes, otherwise 1 naming the failures).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import evaluation, figures, gradcheck, mine, optim, signals, trainer
from .autodiff import Tensor, backward, neg
from .errors import ContractError, MineIcaError, NumericalError
from .signals import SourceSpec
from .trainer import TrainConfig, TrainingAbort

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_BAD_CONFIG = 2
EXIT_NUMERICAL = 3

# Tolerance band around the analytic Gaussian MI for validate-mi.
MI_BAND_BELOW = 0.2
MI_BAND_ABOVE = 0.1
MI_ESTIMATE_WINDOW = 100
DEFAULT_MI_EPOCHS = 300

_CONFIG_KEYS = {
    "sources", "mixing_matrix", "n_samples", "duration",
    "encoder_epochs", "mine_epochs_per_encoder_epoch", "lr", "mine_mode",
    "mine_reinit", "log_every", "whitening_epsilon",
    "seed", "out_dir", "emit_plots",
}


@dataclass
class ExperimentConfig:
    """Full experiment description; defaults reproduce the 3x3 benchmark."""
    sources: list[SourceSpec] = field(default_factory=signals.default_specs)
    mixing_matrix: np.ndarray = field(
        default_factory=lambda: signals.BENCHMARK_MIXING_MATRIX.copy())
    n_samples: int = signals.DEFAULT_N_SAMPLES
    duration: float = signals.DEFAULT_DURATION
    encoder_epochs: int = 1000
    mine_epochs_per_encoder_epoch: int = 7
    lr: float = 0.005
    mine_mode: str = "shared"
    mine_reinit: str = "never"
    log_every: int = 100
    whitening_epsilon: float = 1e-8
    seed: int = 0
    out_dir: str = "out"
    emit_plots: bool = True

    def __post_init__(self):
        self.mixing_matrix = np.asarray(self.mixing_matrix, dtype=np.float64)
        a = self.mixing_matrix
        if a.ndim != 2 or a.shape[1] != len(self.sources):
            raise ContractError(
                f"mixing matrix shape {a.shape} incompatible with "
                f"{len(self.sources)} sources")
        if a.shape[0] < a.shape[1]:
            raise ContractError("need at least as many observations as sources")
        if not np.isfinite(a).all():
            raise ContractError("mixing matrix must be finite")
        self.train_config(seed=0)  # validate training fields eagerly

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = set(data) - _CONFIG_KEYS
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "sources" in kwargs:
            kwargs["sources"] = [SourceSpec(**entry) for entry in kwargs["sources"]]
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(
            encoder_epochs=self.encoder_epochs,
            mine_epochs_per_encoder_epoch=self.mine_epochs_per_encoder_epoch,
            lr=self.lr, seed=seed, mine_mode=self.mine_mode,
            mine_reinit=self.mine_reinit, log_every=self.log_every,
            whitening_epsilon=self.whitening_epsilon)


def split_seed(seed: int, n: int) -> list[int]:
    """Independent child seeds for the experiment's random consumers."""
    return [int(child.generate_state(1)[0])
            for child in np.random.SeedSequence(seed).spawn(n)]


def analytic_gaussian_mi(rho: float) -> float:
    """Closed-form MI of a correlated bivariate standard Gaussian, in nats."""
    if not abs(rho) < 1:
        raise ContractError("|rho| must be < 1")
    return -0.5 * np.log1p(-rho * rho)


def sample_correlated_gaussian(rho: float, n: int,
                               rng: np.random.Generator) -> np.ndarray:
    e = rng.standard_normal((n, 2))
    z2 = rho * e[:, 0] + np.sqrt(1.0 - rho * rho) * e[:, 1]
    return np.column_stack([e[:, 0], z2])


@dataclass
class GaussianMiResult:
    rho: float
    analytic: float
    estimate: float            # mean of the trailing window of epoch values
    epoch_values: list[float]  # pre-step bound value per epoch

    @property
    def within_band(self) -> bool:
        return (self.analytic - MI_BAND_BELOW <= self.estimate
                <= self.analytic + MI_BAND_ABOVE)


def train_gaussian_mi(rho: float, n: int, epochs: int = DEFAULT_MI_EPOCHS,
                      seed: int = 0) -> GaussianMiResult:
    """Train the estimator on a correlated Gaussian pair, full batch.

    The reported estimate averages the bound over the last
    ``MI_ESTIMATE_WINDOW`` epochs to smooth permutation noise.
    """
    if not abs(rho) < 1:
        raise ContractError("|rho| must be < 1")
    if n < 100:
        raise ContractError("need n >= 100 samples")
    if epochs < 1:
        raise ContractError("need at least one epoch")

    data_ss, net_ss, perm_ss = np.random.SeedSequence(seed).spawn(3)
    z = Tensor(sample_correlated_gaussian(rho, n, np.random.default_rng(data_ss)))
    net = mine.build_statistics_network(2, net_ss)
    opt = optim.Nadam(net.parameters())
    perm_rng = np.random.default_rng(perm_ss)

    values = []
    for _ in range(epochs):
        batch = mine.make_mine_batch(z, 0, perm_rng.permutation(n))
        loss = mine.mine_loss_component(net, batch)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalError(f"estimator diverged (bound {value})")
        opt.zero_grad()
        backward(neg(loss))
        opt.step()
        values.append(value)

    window = values[-min(MI_ESTIMATE_WINDOW, len(values)):]
    return GaussianMiResult(rho=rho, analytic=analytic_gaussian_mi(rho),
                            estimate=float(np.mean(window)), epoch_values=values)


def _write_report(path: Path, reports: Sequence[evaluation.EvalReport]) -> None:
    payload = [r.to_dict() for r in reports]
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _write_figures(out: Path, sig: signals.SignalSet,
                   recovered: dict[str, np.ndarray]) -> None:
    panels = [
        ("fig2a.svg", sig.S, "s", "Source signals"),
        ("fig2b.svg", sig.X, "x", "Mixed observations"),
        ("fig2c.svg", recovered["mine_ica"], "y", "Recovered (MINE-ICA)"),
        ("fig2d.svg", recovered["fastica"], "y", "Recovered (FastICA)"),
    ]
    for name, matrix, prefix, title in panels:
        labels = [f"{prefix}{k + 1}" for k in range(matrix.shape[0])]
        figures.write_waveforms_svg(str(out / name), sig.t, matrix, labels, title)


def cmd_run(args: argparse.Namespace) -> int:
    try:
        if args.config:
            config = ExperimentConfig.from_json(args.config)
        else:
            config = ExperimentConfig()
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        if args.out is not None:
            config = replace(config, out_dir=args.out)
        if args.no_plots:
            config = replace(config, emit_plots=False)
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
    except (MineIcaError, ValueError, TypeError, KeyError, OSError) as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG

    signal_seed, train_seed, fastica_seed = split_seed(config.seed, 3)
    try:
        sig = signals.make_signal_set(config.sources, config.mixing_matrix,
                                      config.n_samples, config.duration,
                                      signal_seed)
        signals.write_timeseries_csv(str(out / "sources.csv"), sig.t,
                                     [("s", sig.S)])
        signals.write_timeseries_csv(str(out / "mixed.csv"), sig.t,
                                     [("x", sig.X)])

        try:
            encoder, trace = trainer.run(config.train_config(train_seed), sig)
        except TrainingAbort as abort:
            abort.trace.to_csv(str(out / "trace.csv"), include_timing=False)
            raise
        trace.to_csv(str(out / "trace.csv"), include_timing=False)

        mine_result = evaluation.effective_unmixing(encoder, sig.X)
        fast_result = evaluation.fastica(sig.X, sig.n_components,
                                         seed=fastica_seed)
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    signals.write_timeseries_csv(str(out / "recovered_mine.csv"), sig.t,
                                 [("y", mine_result.Y)])
    signals.write_timeseries_csv(str(out / "recovered_fastica.csv"), sig.t,
                                 [("y", fast_result.Y)])

    reports = [
        evaluation.evaluate_unmixing(mine_result, sig.S, sig.A,
                                     seed=config.seed, iterations=len(trace)),
        evaluation.evaluate_unmixing(fast_result, sig.S, sig.A,
                                     seed=config.seed),
    ]
    _write_report(out / "report.json", reports)

    if config.emit_plots:
        # Figures are a convenience; never let them change the exit code.
        try:
            _write_figures(out, sig, {"mine_ica": mine_result.Y,
                                      "fastica": fast_result.Y})
        except Exception as exc:  # noqa: BLE001
            print(f"figure generation failed: {exc}", file=sys.stderr)

    for report in reports:
        print(f"{report.method}: mean_matched_correlation="
              f"{report.mean_matched_correlation:.4f} "
              f"amari_index={report.amari_index:.4f} "
              f"converged={report.converged} iterations={report.iterations}")
    print(f"artifacts written to {out}")
    return EXIT_OK


def cmd_validate_mi(args: argparse.Namespace) -> int:
    if not abs(args.rho) < 1 or args.n < 100 or args.epochs < 1:
        print("bad arguments: need |rho| < 1, n >= 100, epochs >= 1",
              file=sys.stderr)
        return EXIT_BAD_CONFIG
    try:
        result = train_gaussian_mi(args.rho, args.n, args.epochs, args.seed)
    except NumericalError as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    lo = result.analytic - MI_BAND_BELOW
    hi = result.analytic + MI_BAND_ABOVE
    verdict = "PASS" if result.within_band else "FAIL"
    print(f"rho={args.rho:g} n={args.n} epochs={args.epochs} seed={args.seed}")
    print(f"analytic MI:  {result.analytic:.6f} nats")
    print(f"estimated MI: {result.estimate:.6f} nats "
          f"(mean of last {min(MI_ESTIMATE_WINDOW, args.epochs)} epochs)")
    print(f"band [{lo:.6f}, {hi:.6f}] -> {verdict}")
    return EXIT_OK if result.within_band else EXIT_FAILURE


def cmd_gradcheck(args: argparse.Namespace) -> int:
    checks = gradcheck.run_suite(args.seed)
    failures = [c for c in checks if not c.passed()]
    for check in checks:
        status = "PASS" if check.passed() else "FAIL"
        print(f"{check.name:<20} max_rel_err={check.max_rel_error:.3e}  {status}")
    worst = gradcheck.worst_check(checks)
    print(f"worst: {worst.name} ({worst.max_rel_error:.3e}); "
          f"tolerance {gradcheck.DEFAULT_TOLERANCE:g}")
    if failures:
        print("failing ops: " + ", ".join(c.name for c in failures))
        return EXIT_FAILURE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mineica",
        description="Linear ICA by minimizing a neural mutual-information "
                    "estimate, with a FastICA baseline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the separation experiment")
    p_run.add_argument("--config", help="JSON config file (defaults rebuild "
                                        "the 3x3 benchmark)")
    p_run.add_argument("--seed", type=int, help="override the root seed")
    p_run.add_argument("--out", help="override the output directory")
    p_run.add_argument("--no-plots", action="store_true",
                       help="skip SVG figure output")
    p_run.set_defaults(func=cmd_run)

    p_mi = sub.add_parser("validate-mi",
                          help="check the estimator against analytic Gaussian MI")
    p_mi.add_argument("--rho", type=float, required=True,
                      help="correlation coefficient, |rho| < 1")
    p_mi.add_argument("--n", type=int, default=5000, help="sample count")
    p_mi.add_argument("--epochs", type=int, default=DEFAULT_MI_EPOCHS)
    p_mi.add_argument("--seed", type=int, default=0)
    p_mi.set_defaults(func=cmd_validate_mi)

    p_gc = sub.add_parser("gradcheck",
                          help="finite-difference check of every op")
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
