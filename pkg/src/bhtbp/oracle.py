"""Exact Bayesian reference for small instances by support enumeration.

For every one of the 2^n support patterns the Gaussian slab integrates in
closed form, so the marginal likelihood of the measurement is a centered
multivariate normal whose covariance adds the slab energy of the active
columns to the noise floor.  Summing pattern weights in the log domain gives
exact per-coordinate activity posteriors, against which the message-passing
decoder and the detector are validated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from .model import StateVector


@dataclass(frozen=True)
class OracleLimit:
    """Guard rail: enumeration is exponential, refuse beyond max_n."""

    max_n: int = 16


def _dense(matrix) -> np.ndarray:
    return matrix.to_dense() if hasattr(matrix, "to_dense") else np.asarray(matrix, dtype=float)


def exact_support_posterior(matrix, z: np.ndarray, q: float, slab_std: float,
                            noise_std: float, limit: OracleLimit = OracleLimit()) -> np.ndarray:
    """Pr{coordinate active | z} for every coordinate, by full enumeration.

    Assumes the untruncated Gaussian slab prior the decoder itself uses.
    Requires noise_std > 0 so every pattern's covariance is positive
    definite.
    """
    A = _dense(matrix)
    m, n = A.shape
    if n > limit.max_n:
        raise ValueError(f"enumeration limited to n <= {limit.max_n}, got {n}")
    if noise_std <= 0.0:
        raise ValueError("exact enumeration needs noise_std > 0")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must be in [0, 1]")
    z = np.asarray(z, dtype=float)
    if len(z) != m:
        raise ValueError("measurement length does not match matrix")
    if q == 0.0:
        return np.zeros(n)
    if q == 1.0:
        return np.ones(n)

    log_q, log_1mq = np.log(q), np.log1p(-q)
    npat = 1 << n
    log_joint = np.empty(npat)
    base = noise_std**2 * np.eye(m)
    for pattern in range(npat):
        cols = [i for i in range(n) if pattern >> i & 1]
        cov = base + slab_std**2 * (A[:, cols] @ A[:, cols].T) if cols else base
        chol = cho_factor(cov, lower=True)
        quad = float(z @ cho_solve(chol, z))
        logdet = 2.0 * np.log(np.diag(chol[0])).sum()
        loglik = -0.5 * (m * np.log(2.0 * np.pi) + logdet + quad)
        log_joint[pattern] = loglik + len(cols) * log_q + (n - len(cols)) * log_1mq

    total = logsumexp(log_joint)
    patterns = np.arange(npat)
    probs = np.empty(n)
    for i in range(n):
        mask = (patterns >> i & 1).astype(bool)
        probs[i] = np.exp(logsumexp(log_joint[mask]) - total)
    return probs


def exact_map_support(matrix, z: np.ndarray, q: float, slab_std: float,
                      noise_std: float, limit: OracleLimit = OracleLimit()) -> StateVector:
    """Coordinate-wise MAP decision from the exact posteriors (tie -> inactive)."""
    probs = exact_support_posterior(matrix, z, q, slab_std, noise_std, limit)
    return StateVector((probs > 0.5).astype(np.uint8))
