"""Synthetic source generation, linear mixing, and CSV export.

The benchmark mirrors the classic noisy blind-source-separation setup:
three sources (sine, square, sawtooth) on a uniform time grid, each with
additive Gaussian noise, standardized per row, then mixed by a fixed 3x3
matrix. Data layout is components x time; network batches are the
transpose, owned by the trainer.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .errors import ContractError, NumericalError, ShapeError

BENCHMARK_MIXING_MATRIX = np.array([
    [1.0, 1.0, 1.0],
    [0.5, 2.0, 1.0],
    [1.5, 1.0, 2.0],
])
DEFAULT_N_SAMPLES = 2000
DEFAULT_DURATION = 8.0
DEFAULT_NOISE_STD = 0.2

_WAVEFORM_KINDS = ("sine", "square", "sawtooth")


@dataclass(frozen=True)
class SourceSpec:
    """One ground-truth source: waveform family, angular frequency, noise."""
    kind: str
    frequency: float
    noise_std: float = DEFAULT_NOISE_STD
    seed: int | None = None  # overrides the generator-level seed split

    def __post_init__(self):
        if self.kind not in _WAVEFORM_KINDS:
            raise ContractError(f"unknown waveform kind {self.kind!r}")
        if self.noise_std < 0:
            raise ContractError("noise_std must be nonnegative")


@dataclass
class SignalSet:
    """Ground truth sources S (M x T), mixing matrix A (N x M), and
    observations X = A @ S (N x T) on a shared time axis."""
    t: np.ndarray
    S: np.ndarray
    A: np.ndarray
    X: np.ndarray

    @property
    def n_components(self) -> int:
        return self.S.shape[0]

    @property
    def n_observations(self) -> int:
        return self.X.shape[0]

    @property
    def n_samples(self) -> int:
        return self.S.shape[1]


def default_specs(noise_std: float = DEFAULT_NOISE_STD) -> list[SourceSpec]:
    """Sine at 2 rad/s, square at 3 rad/s, sawtooth with period 1 s."""
    return [
        SourceSpec("sine", 2.0, noise_std),
        SourceSpec("square", 3.0, noise_std),
        SourceSpec("sawtooth", 2.0 * np.pi, noise_std),
    ]


def waveform(kind: str, frequency: float, t: np.ndarray) -> np.ndarray:
    """Raw noiseless waveform sampled at times t (seconds)."""
    phase = frequency * t
    if kind == "sine":
        return np.sin(phase)
    if kind == "square":
        return np.sign(np.sin(phase))
    if kind == "sawtooth":
        # 2*pi-periodic ramp from -1 to 1, matching the usual sawtooth(t).
        return np.mod(phase, 2.0 * np.pi) / np.pi - 1.0
    raise ContractError(f"unknown waveform kind {kind!r}")


def generate_sources(specs: Sequence[SourceSpec], n_samples: int = DEFAULT_N_SAMPLES,
                     duration: float = DEFAULT_DURATION, seed=0
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Sample sources on a uniform grid; add noise, then standardize each
    row to zero mean and unit variance."""
    if n_samples < 2:
        raise ContractError("need at least 2 samples")
    if duration <= 0:
        raise ContractError("duration must be positive")
    t = np.linspace(0.0, duration, n_samples)
    child_seeds = np.random.SeedSequence(seed).spawn(len(specs))
    rows = []
    for spec, child in zip(specs, child_seeds):
        rng = np.random.default_rng(spec.seed if spec.seed is not None else child)
        row = waveform(spec.kind, spec.frequency, t)
        if spec.noise_std > 0:
            row = row + spec.noise_std * rng.standard_normal(n_samples)
        std = row.std()
        if std == 0.0:
            raise NumericalError(f"source {spec.kind!r} is constant; cannot standardize")
        rows.append((row - row.mean()) / std)
    return t, np.vstack(rows)


def mix(S: np.ndarray, A: np.ndarray) -> np.ndarray:
    """Observations X = A @ S."""
    if A.ndim != 2 or S.ndim != 2 or A.shape[1] != S.shape[0]:
        raise ShapeError(f"cannot mix: A is {A.shape}, S is {S.shape}")
    return A @ S


def make_signal_set(specs: Sequence[SourceSpec], A: np.ndarray,
                    n_samples: int = DEFAULT_N_SAMPLES,
                    duration: float = DEFAULT_DURATION, seed=0) -> SignalSet:
    t, S = generate_sources(specs, n_samples, duration, seed)
    return SignalSet(t=t, S=S, A=np.array(A, dtype=np.float64), X=mix(S, A))


def benchmark_signals(seed=0) -> SignalSet:
    """The 3x3 benchmark: noisy sine/square/sawtooth, 2000 samples over 8 s,
    mixed by the fixed benchmark matrix."""
    return make_signal_set(default_specs(), BENCHMARK_MIXING_MATRIX,
                           DEFAULT_N_SAMPLES, DEFAULT_DURATION, seed)


def _format_value(v: float) -> str:
    return f"{v:.17g}"


def write_timeseries_csv(out: TextIO | str, t: np.ndarray,
                         blocks: Sequence[tuple[str, np.ndarray]]) -> None:
    """Write `t` plus one column group per (prefix, M x T matrix) block,
    full double precision."""
    if isinstance(out, str):
        with open(out, "w", encoding="utf-8") as fh:
            write_timeseries_csv(fh, t, blocks)
        return
    header = ["t"]
    for prefix, matrix in blocks:
        if matrix.shape[1] != t.shape[0]:
            raise ShapeError(f"block {prefix!r} has {matrix.shape[1]} columns "
                             f"but the time axis has {t.shape[0]}")
        header.extend(f"{prefix}{k + 1}" for k in range(matrix.shape[0]))
    out.write(",".join(header) + "\n")
    for idx in range(t.shape[0]):
        row = [_format_value(t[idx])]
        for _, matrix in blocks:
            row.extend(_format_value(v) for v in matrix[:, idx])
        out.write(",".join(row) + "\n")


def signalset_to_csv(out: TextIO | str, signals: SignalSet) -> None:
    """Full export with header t,s1..sM,x1..xN."""
    write_timeseries_csv(out, signals.t, [("s", signals.S), ("x", signals.X)])


def signalset_to_csv_string(signals: SignalSet) -> str:
    buf = io.StringIO()
    signalset_to_csv(buf, signals)
    return buf.getvalue()
