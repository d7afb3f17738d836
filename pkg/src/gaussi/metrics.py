"""Leakage metrics and Gaussian-mechanism calibration on Gaussian states."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import StateError
from .gaussian import GaussianState


@dataclass(frozen=True)
class DpParameters:
    """(epsilon, delta) target and query sensitivity for the Gaussian mechanism."""

    epsilon: float
    delta: float
    sensitivity: float

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not (0 < self.delta < 1):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not (self.sensitivity >= 0 and math.isfinite(self.sensitivity)):
            raise ValueError(f"sensitivity must be non-negative, got {self.sensitivity}")


@dataclass(frozen=True)
class LeakageReport:
    label: str
    kl_prior_posterior: float        # log2-leading formula, posterior vs prior
    kl_prior_posterior_nats: float
    mutual_information: float        # bits, secret vs released output

    def __post_init__(self):
        if self.mutual_information < -1e-12:
            raise ValueError("mutual information cannot be negative")


def _check_var(*variances):
    for v in variances:
        if not v > 0:
            raise ValueError(f"variances must be positive, got {v}")


def kl_divergence_paper(mean_p, var_p, mean_q, var_q) -> float:
    """``log2(sd_q / sd_p) + (var_p + (mean_p - mean_q)**2) / (2 var_q) - 1/2``.

    This mixes a base-2 leading term with the natural-log constant; it is kept
    verbatim for comparison with published figures.  Use
    :func:`kl_divergence_nats` for the standard divergence.
    """
    _check_var(var_p, var_q)
    return (math.log2(math.sqrt(var_q) / math.sqrt(var_p))
            + (var_p + (mean_p - mean_q) ** 2) / (2.0 * var_q) - 0.5)


def kl_divergence_nats(mean_p, var_p, mean_q, var_q) -> float:
    """KL(P || Q) in nats for univariate normals P and Q."""
    _check_var(var_p, var_q)
    ratio = var_p / var_q
    return 0.5 * (ratio + (mean_p - mean_q) ** 2 / var_q - 1.0 - math.log(ratio))


def mutual_information(state: GaussianState, a: str, b: str) -> float:
    """Mutual information in bits between two variables of ``state``.

    Exactly 0 for independent pairs.  A singular pair (perfect correlation)
    returns ``inf`` with a warning.
    """
    if a == b:
        raise StateError("mutual information needs two distinct variables")
    _, cov = state.marginal([a, b])
    vaa, vbb, cab = cov[0, 0], cov[1, 1], cov[0, 1]
    if state.is_independent(a, b):
        return 0.0
    det = vaa * vbb - cab * cab
    if det <= 1e-12 * vaa * vbb:
        warnings.warn(f"{a} and {b} are perfectly correlated; mutual information is unbounded",
                      RuntimeWarning, stacklevel=2)
        return math.inf
    # 1 - rho^2 form avoids cancellation in det for weakly correlated pairs
    rho2 = (cab * cab) / (vaa * vbb)
    return max(-0.5 * math.log1p(-rho2) / math.log(2.0), 0.0)


def gaussian_mechanism_variance(params: DpParameters) -> float:
    """Noise variance ``2 * sensitivity**2 * ln(1.25 / delta) / epsilon**2``."""
    return 2.0 * params.sensitivity ** 2 * math.log(1.25 / params.delta) / params.epsilon ** 2


def _std_normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def interval_probability(state: GaussianState, x: str, lo: float, hi: float) -> float:
    """P(lo <= x <= hi) under the marginal of ``x``."""
    if lo > hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    mu, var = state.mean_of(x), state.variance(x)
    if var <= 0:
        return 1.0 if lo <= mu <= hi else 0.0
    if lo == hi:
        return 0.0
    sd = math.sqrt(var)
    zl, zh = (lo - mu) / sd, (hi - mu) / sd
    if zl > 0:
        # upper tail: difference of survival functions keeps precision
        return 0.5 * (math.erfc(zl / math.sqrt(2.0)) - math.erfc(zh / math.sqrt(2.0)))
    return _std_normal_cdf(zh) - _std_normal_cdf(zl)


def density_curve(state: GaussianState, x: str, lo: float, hi: float, points: int):
    """``points`` evenly spaced ``(value, density)`` pairs of the marginal of ``x``."""
    if points < 2:
        raise ValueError("a density curve needs at least two points")
    mu, var = state.mean_of(x), state.variance(x)
    if var <= 0:
        raise ValueError(f"{x} has zero variance; its density is degenerate")
    grid = np.linspace(lo, hi, int(points))
    dens = np.exp(-0.5 * (grid - mu) ** 2 / var) / math.sqrt(2.0 * math.pi * var)
    return list(zip(grid.tolist(), dens.tolist()))
