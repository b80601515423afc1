"""FastICA baseline and permutation/scale-invariant recovery metrics.

Recovered sources are compared to ground truth with correlations matched
by exhaustive assignment, and unmixing structure is scored by the Amari
index of the effective unmixing map composed with the mixing matrix.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff
from .autodiff import Tensor
from .errors import ContractError, NumericalError, ShapeError
from .nn import EncoderModel

MAX_EXHAUSTIVE_COMPONENTS = 8


@dataclass
class UnmixResult:
    """A recovered source matrix with its effective linear unmixing map.

    Satisfies Y = U_eff @ (X - offset) to numerical precision, where
    offset is the per-row batch mean of the observations.
    """
    Y: np.ndarray
    U_eff: np.ndarray
    offset: np.ndarray
    method: str
    converged: bool = True
    iterations: int = 0


@dataclass
class MatchResult:
    assignment: tuple[int, ...]      # recovered row j <- assignment[j]-th source
    per_source: list[float]          # |Pearson r| per matched pair
    mean: float


@dataclass
class EvalReport:
    """Flat per-method evaluation summary, serializable as JSON."""
    method: str
    mean_matched_correlation: float
    per_source_correlations: list[float]
    amari_index: float
    converged: bool
    iterations: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "mean_matched_correlation": self.mean_matched_correlation,
            "per_source_correlations": self.per_source_correlations,
            "amari_index": self.amari_index,
            "converged": self.converged,
            "iterations": self.iterations,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _sym_inv_sqrt(matrix: np.ndarray) -> np.ndarray:
    eigenvalues, eigenvectors = np.linalg.eigh(matrix)
    if np.any(eigenvalues <= 0.0):
        raise NumericalError("matrix not positive definite")
    return (eigenvectors * eigenvalues ** -0.5) @ eigenvectors.T


def fastica(X: np.ndarray, n_components: int, seed=0, tol: float = 1e-6,
            max_iter: int = 500) -> UnmixResult:
    """Parallel (symmetric) fixed-point ICA with the tanh nonlinearity.

    Centers and PCA-whitens X, then iterates the fixed-point update with
    symmetric decorrelation until the unmixing rotation stabilizes. On
    non-convergence the best iterate is returned with ``converged=False``.
    """
    X = np.asarray(X, dtype=np.float64)
    n, t = X.shape
    if n < n_components:
        raise ContractError(f"cannot extract {n_components} components from "
                            f"{n} observations")
    if t <= n:
        raise ContractError("need more samples than observation channels")

    offset = X.mean(axis=1, keepdims=True)
    centered = X - offset
    cov = centered @ centered.T / t
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1][:n_components]
    principal = eigenvalues[order]
    if np.any(principal <= 0.0):
        raise NumericalError("observation covariance is rank deficient")
    whitener = (eigenvectors[:, order] * principal ** -0.5).T  # M x N
    x_white = whitener @ centered

    rng = np.random.default_rng(seed)
    w = rng.standard_normal((n_components, n_components))
    w = _sym_inv_sqrt(w @ w.T) @ w

    converged = False
    iterations = max_iter
    for iteration in range(1, max_iter + 1):
        projected = w @ x_white
        g = np.tanh(projected)
        g_prime_mean = (1.0 - g ** 2).mean(axis=1)
        w_new = g @ x_white.T / t - g_prime_mean[:, None] * w
        w_new = _sym_inv_sqrt(w_new @ w_new.T) @ w_new
        # Rotation change, invariant to the per-row sign indeterminacy.
        delta = float(np.max(np.abs(np.abs(np.einsum("ij,ij->i", w_new, w)) - 1.0)))
        w = w_new
        if delta < tol:
            converged = True
            iterations = iteration
            break

    u_eff = w @ whitener
    return UnmixResult(Y=u_eff @ centered, U_eff=u_eff, offset=offset,
                       method="fastica", converged=converged, iterations=iterations)


def matched_correlation(Y: np.ndarray, S: np.ndarray) -> MatchResult:
    """Absolute Pearson correlations under the best row assignment.

    The assignment maximizing the summed |r| is found by exhaustive search
    over permutations (exact for small M).
    """
    Y = np.asarray(Y, dtype=np.float64)
    S = np.asarray(S, dtype=np.float64)
    if Y.shape != S.shape:
        raise ShapeError(f"shape mismatch: {Y.shape} vs {S.shape}")
    m = Y.shape[0]
    if m > MAX_EXHAUSTIVE_COMPONENTS:
        raise ContractError(f"exhaustive assignment supports at most "
                            f"{MAX_EXHAUSTIVE_COMPONENTS} components")
    y_sd = Y.std(axis=1)
    s_sd = S.std(axis=1)
    # Relative threshold: a constant row's std is not exactly zero (the
    # mean picks up rounding error), only ~eps times its magnitude.
    y_floor = 1e-12 * np.maximum(np.abs(Y).max(axis=1), 1.0)
    s_floor = 1e-12 * np.maximum(np.abs(S).max(axis=1), 1.0)
    if np.any(y_sd <= y_floor) or np.any(s_sd <= s_floor):
        raise ContractError("correlation undefined for constant rows")

    yc = Y - Y.mean(axis=1, keepdims=True)
    sc = S - S.mean(axis=1, keepdims=True)
    corr = np.abs(yc @ sc.T) / (Y.shape[1] * np.outer(y_sd, s_sd))

    best: tuple[int, ...] | None = None
    best_total = -np.inf
    for perm in itertools.permutations(range(m)):
        total = sum(corr[row, perm[row]] for row in range(m))
        if total > best_total:
            best_total = total
            best = perm
    per_source = [float(corr[row, best[row]]) for row in range(m)]
    return MatchResult(assignment=tuple(best), per_source=per_source,
                       mean=float(np.mean(per_source)))


def amari_index(P: np.ndarray) -> float:
    """Normalized distance of P from a scaled permutation matrix, in [0, 1].

    Zero iff every row and column has a single nonzero entry.
    """
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ShapeError(f"Amari index needs a square matrix, got {P.shape}")
    m = P.shape[0]
    if m < 2:
        raise ContractError("Amari index needs at least a 2x2 matrix")
    a = np.abs(P)
    row_max = a.max(axis=1)
    col_max = a.max(axis=0)
    if np.any(row_max == 0.0) or np.any(col_max == 0.0):
        raise ContractError("Amari index undefined for all-zero rows/columns")
    row_term = (a / row_max[:, None]).sum() - m
    col_term = (a / col_max[None, :]).sum() - m
    return float((row_term + col_term) / (2.0 * m * (m - 1)))


def effective_unmixing(encoder: EncoderModel, X: np.ndarray) -> UnmixResult:
    """Collapse a trained encoder into one linear map at X's batch statistics.

    Runs a forward pass to refresh the whitening cache, then composes the
    whitening transform with the encoder weights: Y = U_eff @ (X - offset).
    """
    X = np.asarray(X, dtype=np.float64)
    with autodiff.no_grad():
        y = encoder.forward(Tensor(X.T))
    cache = encoder.whitening.cache
    weights = encoder.linear.weights.values  # N x M
    u_eff = cache.inv_sqrt @ weights.T       # M x N
    offset = X.mean(axis=1, keepdims=True)
    return UnmixResult(Y=y.values.T.copy(), U_eff=u_eff, offset=offset,
                       method="mine_ica")


def evaluate_unmixing(result: UnmixResult, S: np.ndarray, A: np.ndarray,
                      seed: int, iterations: int | None = None) -> EvalReport:
    """Score one unmixing result against ground truth sources and mixing."""
    match = matched_correlation(result.Y, S)
    return EvalReport(
        method=result.method,
        mean_matched_correlation=match.mean,
        per_source_correlations=match.per_source,
        amari_index=amari_index(result.U_eff @ A),
        converged=result.converged,
        iterations=result.iterations if iterations is None else iterations,
        seed=seed,
    )
