"""Per-coordinate hypothesis test turning posterior beliefs into a support set.

The test compares Pr{inactive | z} against Pr{active | z}.  In the spiked
representation that posterior odds ratio is exactly spike / slab mass, since
the atom at zero is precisely the inactive hypothesis; the integral form
(posterior reweighted by conditional-over-prior mass ratios, thresholded at
the prior odds) is implemented alongside and must agree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .density import SpikedDensity
from .model import StateVector

LOG_RATIO_CAP = 700.0


@dataclass(frozen=True)
class DetectionResult:
    """Detected support plus the per-coordinate log odds of being inactive."""

    support: StateVector
    log_ratios: np.ndarray


def _check_normalized(d: SpikedDensity, name: str) -> None:
    if abs(d.total() - 1.0) > 1e-6:
        raise ValueError(f"{name} is not normalized (total {d.total()})")


def _cap(value: float) -> float:
    return max(-LOG_RATIO_CAP, min(LOG_RATIO_CAP, value))


def hypothesis_test(posterior: SpikedDensity, prior: SpikedDensity) -> tuple[int, float]:
    """Decide one coordinate's state from its posterior belief.

    Returns (state bit, log posterior odds of inactivity).  The odds reduce
    to w / (1 - w) for posterior spike weight w; ties decide inactive.
    """
    _check_normalized(posterior, "posterior")
    _check_normalized(prior, "prior")
    w = posterior.spike_weight
    if w >= 1.0:
        return 0, LOG_RATIO_CAP
    if w <= 0.0:
        return 1, -LOG_RATIO_CAP
    log_ratio = _cap(math.log(w) - math.log1p(-w))
    return (0 if log_ratio >= 0.0 else 1), log_ratio


def hypothesis_test_integral(posterior: SpikedDensity, prior: SpikedDensity) -> tuple[int, float]:
    """Literal integral form of the same test.

    Both integrals reweight the posterior by the ratio of a conditional
    (point mass at zero, or the slab) to the full prior, and the threshold is
    the prior odds of activity.  Kept as an independent computation; it must
    agree with ``hypothesis_test``.
    """
    _check_normalized(posterior, "posterior")
    _check_normalized(prior, "prior")
    q = 1.0 - prior.spike_weight
    if q <= 0.0:
        return 0, LOG_RATIO_CAP
    if q >= 1.0:
        return 1, -LOG_RATIO_CAP
    # Inactive conditional is the unit atom: its mass ratio against the prior
    # is 1 / (1 - q) at the atom and 0 elsewhere.
    numerator = posterior.spike_weight / prior.spike_weight
    # Active conditional is the slab, i.e. the prior's continuous part over q.
    slab = prior.cont.mass / q
    ok = prior.cont.mass > 0.0
    denominator = float(np.sum(posterior.cont.mass[ok] * slab[ok] / prior.cont.mass[ok]))
    gamma = q / (1.0 - q)
    if numerator == 0.0:
        return 1, -LOG_RATIO_CAP
    if denominator == 0.0:
        return 0, LOG_RATIO_CAP
    # log posterior odds = log(numerator / denominator) - log(gamma)
    log_ratio = _cap(math.log(numerator) - math.log(denominator) - math.log(gamma))
    return (0 if log_ratio >= 0.0 else 1), log_ratio


def detect_support(posteriors, prior: SpikedDensity) -> DetectionResult:
    """Apply the hypothesis test coordinate-wise."""
    bits = np.zeros(len(posteriors), dtype=np.uint8)
    log_ratios = np.zeros(len(posteriors))
    for i, post in enumerate(posteriors):
        bit, lr = hypothesis_test(post, prior)
        bits[i] = bit
        log_ratios[i] = lr
    return DetectionResult(StateVector(bits), log_ratios)


def detect_support_k(posteriors, k: int) -> StateVector:
    """Pick the k coordinates most likely active (smallest inactivity odds);
    ties break toward the lower index.  Mirrors the k-largest rule used for
    the baseline recoverers."""
    n = len(posteriors)
    if not 0 <= k <= n:
        raise ValueError(f"need 0 <= k <= n, got k={k}")
    log_ratios = np.empty(n)
    for i, post in enumerate(posteriors):
        w = min(max(post.spike_weight, 0.0), 1.0)
        if w >= 1.0:
            log_ratios[i] = LOG_RATIO_CAP
        elif w <= 0.0:
            log_ratios[i] = -LOG_RATIO_CAP
        else:
            log_ratios[i] = _cap(math.log(w) - math.log1p(-w))
    order = np.argsort(log_ratios, kind="stable")
    bits = np.zeros(n, dtype=np.uint8)
    bits[order[:k]] = 1
    return StateVector(bits)
