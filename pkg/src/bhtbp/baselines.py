"""Reference recoverers: orthogonal matching pursuit and coordinate-descent
Lasso, plus the k-largest-magnitude support rule applied to their estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import StateVector


@dataclass(frozen=True)
class LassoConfig:
    """Solver settings; lam=None lets the caller fall back to the universal
    threshold noise_std * sqrt(2 log n)."""

    lam: float | None = None
    max_iters: int = 1000
    tol: float = 1e-7

    def __post_init__(self):
        if self.lam is not None and self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


def _as_array(matrix) -> np.ndarray:
    return matrix.to_dense() if hasattr(matrix, "to_dense") else np.asarray(matrix, dtype=float)


def omp(matrix, z: np.ndarray, k: int, diag: dict | None = None) -> tuple[np.ndarray, StateVector]:
    """Greedy support recovery: k rounds of max-|correlation| column selection
    with a full least-squares refit on the active set each round.

    Ties break toward the lower column index; selected columns are excluded
    from later rounds.  A rank-deficient active set falls back to the
    pseudo-inverse solution and is flagged in ``diag``.
    """
    A = _as_array(matrix)
    m, n = A.shape
    z = np.asarray(z, dtype=float)
    if not 0 <= k <= min(m, n):
        raise ValueError(f"need 0 <= k <= min(m, n), got k={k}")
    col_norms = np.linalg.norm(A, axis=0)
    if k > 0 and np.any(col_norms == 0.0):
        raise ValueError("matrix has a zero column")

    active: list[int] = []
    coef = np.zeros(0)
    residual = z.copy()
    rank_deficient = False
    for _ in range(k):
        corr = np.abs(A.T @ residual)
        corr[active] = -1.0
        pick = int(np.argmax(corr))
        active.append(pick)
        sub = A[:, active]
        coef, _, rank, _ = np.linalg.lstsq(sub, z, rcond=None)
        if rank < len(active):
            rank_deficient = True
        residual = z - sub @ coef

    estimate = np.zeros(n)
    estimate[active] = coef
    bits = np.zeros(n, dtype=np.uint8)
    bits[active] = 1
    if diag is not None:
        diag["rank_deficient"] = rank_deficient
    return estimate, StateVector(bits)


def soft_threshold(value: float, threshold: float) -> float:
    return math.copysign(max(abs(value) - threshold, 0.0), value)


def lasso(matrix, z: np.ndarray, config: LassoConfig = LassoConfig(),
          noise_std: float | None = None, diag: dict | None = None) -> np.ndarray:
    """Cyclic coordinate descent on 0.5*||z - Ax||^2 + lam*||x||_1.

    Sweeps coordinates in index order until the largest coordinate change
    drops below tol or the sweep budget runs out (flagged via ``diag``).
    Deterministic; the objective is checked to be non-increasing per sweep.
    """
    A = _as_array(matrix)
    m, n = A.shape
    z = np.asarray(z, dtype=float)
    lam = config.lam
    if lam is None:
        if noise_std is None:
            raise ValueError("set config.lam or pass noise_std for the default lambda")
        lam = noise_std * math.sqrt(2.0 * math.log(n))

    col_sq = np.einsum("ij,ij->j", A, A)
    x = np.zeros(n)
    residual = z.copy()
    objective = 0.5 * float(residual @ residual)
    converged = False
    for _ in range(config.max_iters):
        max_change = 0.0
        for i in range(n):
            if col_sq[i] == 0.0:
                continue
            col = A[:, i]
            old = x[i]
            rho = float(col @ residual) + col_sq[i] * old
            new = soft_threshold(rho, lam) / col_sq[i]
            if new != old:
                residual += col * (old - new)
                x[i] = new
                max_change = max(max_change, abs(new - old))
        new_objective = 0.5 * float(residual @ residual) + lam * float(np.abs(x).sum())
        assert new_objective <= objective + 1e-9 * max(1.0, objective), \
            "coordinate sweep increased the objective"
        objective = new_objective
        if max_change < config.tol:
            converged = True
            break
    if diag is not None:
        diag["converged"] = converged
    return x


def k_largest_support(estimate: np.ndarray, k: int) -> StateVector:
    """Support = indices of the k largest magnitudes, ties toward lower index."""
    estimate = np.asarray(estimate, dtype=float)
    n = len(estimate)
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}")
    order = np.argsort(-np.abs(estimate), kind="stable")
    bits = np.zeros(n, dtype=np.uint8)
    bits[order[:k]] = 1
    return StateVector(bits)
