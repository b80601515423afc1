"""Command-line interface tests: config parsing, the Gaussian MI validator,
the gradcheck command, and the end-to-end experiment runner."""

import json
from pathlib import Path

import numpy as np
import pytest

from mineica import cli
from mineica.errors import ContractError
from mineica.signals import SourceSpec


def tiny_config_dict(**overrides):
    """A seconds-scale experiment: full pipeline, minimal iteration budget."""
    base = {
        "n_samples": 64,
        "duration": 8.0,
        "encoder_epochs": 2,
        "mine_epochs_per_encoder_epoch": 2,
        "log_every": 1000,
        "seed": 0,
    }
    base.update(overrides)
    return base


def write_config(tmp_path, name="config.json", **overrides):
    path = tmp_path / name
    path.write_text(json.dumps(tiny_config_dict(**overrides)), encoding="utf-8")
    return str(path)


class TestExperimentConfig:
    def test_defaults_reproduce_benchmark(self):
        config = cli.ExperimentConfig()
        assert config.encoder_epochs == 1000
        assert config.mine_epochs_per_encoder_epoch == 7
        assert config.lr == 0.005
        assert config.n_samples == 2000
        assert len(config.sources) == 3
        assert config.mixing_matrix.shape == (3, 3)

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ContractError, match="unknown config keys"):
            cli.ExperimentConfig.from_dict({"learning_rate": 0.01})

    def test_from_dict_builds_source_specs(self):
        config = cli.ExperimentConfig.from_dict({
            "sources": [
                {"kind": "sine", "frequency": 1.0},
                {"kind": "square", "frequency": 2.0},
            ],
            "mixing_matrix": [[1.0, 0.5], [0.5, 1.0]],
        })
        assert all(isinstance(s, SourceSpec) for s in config.sources)
        assert config.mixing_matrix.shape == (2, 2)

    def test_rejects_matrix_source_mismatch(self):
        with pytest.raises(ContractError):
            cli.ExperimentConfig.from_dict(
                {"mixing_matrix": [[1.0, 0.0], [0.0, 1.0]]})

    def test_rejects_fewer_observations_than_sources(self):
        with pytest.raises(ContractError):
            cli.ExperimentConfig.from_dict(
                {"mixing_matrix": [[1.0, 0.5, 0.25], [0.25, 1.0, 0.5]]})

    def test_rejects_non_finite_matrix(self):
        m = [[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, float("nan")]]
        with pytest.raises(ContractError):
            cli.ExperimentConfig.from_dict({"mixing_matrix": m})

    def test_training_fields_validated_eagerly(self):
        with pytest.raises(ContractError):
            cli.ExperimentConfig.from_dict({"lr": 0.0})
        with pytest.raises(ContractError):
            cli.ExperimentConfig.from_dict({"mine_mode": "ensemble"})

    def test_from_json_round_trip(self, tmp_path):
        path = write_config(tmp_path, seed=9)
        config = cli.ExperimentConfig.from_json(path)
        assert config.seed == 9
        assert config.encoder_epochs == 2

    def test_checked_in_benchmark_config_equals_defaults(self):
        """configs/benchmark.json spells out the default experiment; keep the
        two in sync."""
        path = Path(__file__).resolve().parents[1] / "configs" / "benchmark.json"
        from_file = cli.ExperimentConfig.from_json(str(path))
        defaults = cli.ExperimentConfig()
        np.testing.assert_array_equal(from_file.mixing_matrix,
                                      defaults.mixing_matrix)
        assert from_file.sources == defaults.sources
        for field_name in ("n_samples", "duration", "encoder_epochs",
                           "mine_epochs_per_encoder_epoch", "lr", "mine_mode",
                           "mine_reinit", "log_every", "whitening_epsilon",
                           "seed", "emit_plots"):
            assert getattr(from_file, field_name) \
                == getattr(defaults, field_name), field_name

    def test_train_config_carries_fields(self):
        config = cli.ExperimentConfig.from_dict(tiny_config_dict(lr=0.01))
        tc = config.train_config(seed=5)
        assert tc.lr == 0.01
        assert tc.seed == 5
        assert tc.encoder_epochs == 2


class TestSplitSeed:
    def test_deterministic_and_distinct(self):
        a = cli.split_seed(0, 3)
        b = cli.split_seed(0, 3)
        assert a == b
        assert len(a) == 3
        assert len(set(a)) == 3

    def test_different_roots_differ(self):
        assert cli.split_seed(0, 3) != cli.split_seed(1, 3)


class TestAnalyticGaussianMi:
    def test_independent_is_zero(self):
        assert cli.analytic_gaussian_mi(0.0) == 0.0

    def test_hand_values(self):
        """-0.5*ln(1 - rho^2): 0.9 -> -0.5*ln(0.19), 0.5 -> -0.5*ln(0.75)."""
        assert cli.analytic_gaussian_mi(0.9) == pytest.approx(
            0.8303656034108255, rel=1e-12)
        assert cli.analytic_gaussian_mi(0.5) == pytest.approx(
            0.14384103622589045, rel=1e-12)

    def test_even_in_rho(self):
        assert cli.analytic_gaussian_mi(-0.7) == cli.analytic_gaussian_mi(0.7)

    @pytest.mark.parametrize("rho", [1.0, -1.0, 1.5])
    def test_rejects_degenerate_correlation(self, rho):
        with pytest.raises(ContractError):
            cli.analytic_gaussian_mi(rho)


class TestSampleCorrelatedGaussian:
    def test_empirical_correlation_matches(self):
        z = cli.sample_correlated_gaussian(0.8, 200000,
                                           np.random.default_rng(0))
        assert z.shape == (200000, 2)
        r = np.corrcoef(z.T)[0, 1]
        assert r == pytest.approx(0.8, abs=0.01)
        assert z.std(axis=0) == pytest.approx([1.0, 1.0], abs=0.02)

    def test_deterministic_given_rng_seed(self):
        a = cli.sample_correlated_gaussian(0.5, 100, np.random.default_rng(3))
        b = cli.sample_correlated_gaussian(0.5, 100, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)


class TestTrainGaussianMi:
    def test_validation(self):
        with pytest.raises(ContractError):
            cli.train_gaussian_mi(1.0, 1000)
        with pytest.raises(ContractError):
            cli.train_gaussian_mi(0.5, 50)
        with pytest.raises(ContractError):
            cli.train_gaussian_mi(0.5, 1000, epochs=0)

    def test_short_run_shape(self):
        result = cli.train_gaussian_mi(0.5, 200, epochs=3, seed=0)
        assert len(result.epoch_values) == 3
        assert result.estimate == pytest.approx(np.mean(result.epoch_values))
        assert result.analytic == cli.analytic_gaussian_mi(0.5)
        assert np.isfinite(result.estimate)

    def test_within_band_edges(self):
        analytic = cli.analytic_gaussian_mi(0.5)
        def res(est):
            return cli.GaussianMiResult(0.5, analytic, est, [est])
        assert res(analytic + cli.MI_BAND_ABOVE).within_band
        assert res(analytic - cli.MI_BAND_BELOW).within_band
        assert not res(analytic + cli.MI_BAND_ABOVE + 1e-9).within_band
        assert not res(analytic - cli.MI_BAND_BELOW - 1e-9).within_band


class TestTrainedGaussianEstimates:
    def test_independent_pair_estimate_near_zero(self, gaussian_runs):
        """At rho = 0 the trained estimate stays within 0.05 nats of zero."""
        result = gaussian_runs[0.0]
        assert -0.05 <= result.estimate <= 0.05

    def test_estimates_increase_with_correlation(self, gaussian_runs):
        estimates = [gaussian_runs[rho].estimate for rho in sorted(gaussian_runs)]
        assert estimates == sorted(estimates)


class TestValidateMiCommand:
    def test_bad_arguments_exit_2(self, capsys):
        assert cli.main(["validate-mi", "--rho", "1.5"]) == cli.EXIT_BAD_CONFIG
        assert cli.main(["validate-mi", "--rho", "0.5", "--n", "50"]) \
            == cli.EXIT_BAD_CONFIG
        assert cli.main(["validate-mi", "--rho", "0.5", "--epochs", "0"]) \
            == cli.EXIT_BAD_CONFIG

    def test_within_band_exit_0(self, capsys, monkeypatch):
        analytic = cli.analytic_gaussian_mi(0.9)
        monkeypatch.setattr(cli, "train_gaussian_mi",
                            lambda *a, **k: cli.GaussianMiResult(
                                0.9, analytic, analytic + 0.05, [analytic]))
        assert cli.main(["validate-mi", "--rho", "0.9"]) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert "analytic MI:" in out
        assert "PASS" in out

    def test_out_of_band_exit_1(self, capsys, monkeypatch):
        analytic = cli.analytic_gaussian_mi(0.9)
        monkeypatch.setattr(cli, "train_gaussian_mi",
                            lambda *a, **k: cli.GaussianMiResult(
                                0.9, analytic, analytic + 0.5, [analytic]))
        assert cli.main(["validate-mi", "--rho", "0.9"]) == cli.EXIT_FAILURE
        assert "FAIL" in capsys.readouterr().out

    def test_divergence_exit_3(self, capsys, monkeypatch):
        def boom(*a, **k):
            raise cli.NumericalError("estimator diverged (bound nan)")
        monkeypatch.setattr(cli, "train_gaussian_mi", boom)
        assert cli.main(["validate-mi", "--rho", "0.9"]) == cli.EXIT_NUMERICAL
        assert "numerical abort" in capsys.readouterr().err


class TestGradcheckCommand:
    def test_all_ops_pass(self, capsys):
        assert cli.main(["gradcheck"]) == cli.EXIT_OK
        out = capsys.readouterr().out
        for name in ("matmul_left", "relu", "whiten", "mine_loss",
                     "encoder_composite"):
            assert name in out
        assert out.count("PASS") >= 20
        assert "FAIL" not in out
        assert "worst:" in out

    def test_broken_relu_gradient_is_caught(self, capsys, monkeypatch):
        """Sabotage the relu backward mask; the command must name the op."""
        from mineica import autodiff
        monkeypatch.setattr(autodiff, "_relu_grad_mask",
                            lambda values: (values < 0).astype(np.float64))
        assert cli.main(["gradcheck"]) == cli.EXIT_FAILURE
        out = capsys.readouterr().out
        assert "failing ops:" in out
        failing_line = [l for l in out.splitlines()
                        if l.startswith("failing ops:")][0]
        assert "relu" in failing_line


class TestRunCommand:
    EXPECTED_FILES = (
        "sources.csv", "mixed.csv", "recovered_mine.csv",
        "recovered_fastica.csv", "trace.csv", "report.json",
        "fig2a.svg", "fig2b.svg", "fig2c.svg", "fig2d.svg",
    )

    def run_to(self, tmp_path, subdir, extra_args=(), **overrides):
        out = tmp_path / subdir
        config = write_config(tmp_path, name=f"{subdir}.json",
                              out_dir=str(out), **overrides)
        code = cli.main(["run", "--config", config, *extra_args])
        return code, out

    def test_end_to_end_artifacts(self, tmp_path, capsys):
        code, out = self.run_to(tmp_path, "full")
        assert code == cli.EXIT_OK
        for name in self.EXPECTED_FILES:
            assert (out / name).exists(), name
        stdout = capsys.readouterr().out
        assert "mine_ica:" in stdout
        assert "fastica:" in stdout

    def test_report_structure(self, tmp_path):
        code, out = self.run_to(tmp_path, "report")
        assert code == cli.EXIT_OK
        payload = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert isinstance(payload, list) and len(payload) == 2
        assert [entry["method"] for entry in payload] == ["mine_ica", "fastica"]
        for entry in payload:
            assert set(entry) == {
                "method", "mean_matched_correlation",
                "per_source_correlations", "amari_index", "converged",
                "iterations", "seed",
            }
        assert payload[0]["iterations"] == 2

    def test_trace_row_count_matches_epochs(self, tmp_path):
        code, out = self.run_to(tmp_path, "trace")
        lines = (out / "trace.csv").read_text(encoding="utf-8").strip().split("\n")
        assert len(lines) == 1 + 2
        assert lines[0].startswith("iter,")
        # Timing is excluded so artifacts stay reproducible.
        assert all(line.endswith(",0") for line in lines[1:])

    def test_no_plots_skips_figures(self, tmp_path):
        code, out = self.run_to(tmp_path, "noplots", extra_args=("--no-plots",))
        assert code == cli.EXIT_OK
        assert not (out / "fig2a.svg").exists()
        assert (out / "report.json").exists()

    def test_seed_flag_overrides_config(self, tmp_path):
        code_a, out_a = self.run_to(tmp_path, "seed0")
        code_b, out_b = self.run_to(tmp_path, "seed9", extra_args=("--seed", "9"))
        assert code_a == code_b == cli.EXIT_OK
        assert (out_a / "sources.csv").read_bytes() \
            != (out_b / "sources.csv").read_bytes()
        report = json.loads((out_b / "report.json").read_text(encoding="utf-8"))
        assert report[0]["seed"] == 9

    def test_missing_config_exit_2(self, tmp_path, capsys):
        code = cli.main(["run", "--config", str(tmp_path / "absent.json")])
        assert code == cli.EXIT_BAD_CONFIG
        assert "bad config" in capsys.readouterr().err

    def test_invalid_json_exit_2(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        assert cli.main(["run", "--config", str(path)]) == cli.EXIT_BAD_CONFIG

    def test_unknown_key_exit_2(self, tmp_path, capsys):
        path = tmp_path / "unknown.json"
        path.write_text(json.dumps({"epochs": 5}), encoding="utf-8")
        assert cli.main(["run", "--config", str(path)]) == cli.EXIT_BAD_CONFIG
        assert "unknown config keys" in capsys.readouterr().err

    def test_numerical_abort_exit_3_with_partial_trace(self, tmp_path, capsys):
        """A rank-deficient mixing matrix with whitening_epsilon = 0 makes the
        first whitening covariance singular; the runner must exit 3 and still
        write the partial trace."""
        out = tmp_path / "abort"
        config = tmp_path / "abort.json"
        config.write_text(json.dumps(tiny_config_dict(
            out_dir=str(out),
            mixing_matrix=[[1.0, 1.0, 1.0]] * 3,
            whitening_epsilon=0.0,
        )), encoding="utf-8")
        code = cli.main(["run", "--config", str(config)])
        assert code == cli.EXIT_NUMERICAL
        assert "numerical abort" in capsys.readouterr().err
        trace_lines = (out / "trace.csv").read_text(encoding="utf-8") \
            .strip().split("\n")
        assert trace_lines[0].startswith("iter,")
        assert len(trace_lines) == 1
        assert (out / "sources.csv").exists()
        assert not (out / "report.json").exists()

    def test_deterministic_artifacts(self, tmp_path):
        """Same config, same seed: every artifact byte-identical."""
        _, out_a = self.run_to(tmp_path, "det_a")
        _, out_b = self.run_to(tmp_path, "det_b")
        for name in self.EXPECTED_FILES:
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name
