"""Prediction-accuracy scores: the simple MAE-based score and the CRPS.

The CRPS here is the closed form for a Gaussian belief N(0, sigma^2) over
the relative prediction error, oriented so 0 is best and more negative is
worse. It is strictly proper: its expectation is maximized only when the
reported sigma matches the true error spread.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import erfc

from .errors import DomainError

_SQRT_PI = np.sqrt(np.pi)
_SQRT_2PI = np.sqrt(2.0 * np.pi)

def _std_normal_pdf(u):
    return np.exp(-0.5 * np.square(u)) / _SQRT_2PI


def _std_normal_cdf(u):
    # erfc keeps absolute error ~1e-16, well under the 1e-10 the analytic
    # score examples require.
    return 0.5 * erfc(-u / np.sqrt(2.0))


def mae(predicted: Sequence[float], actual: Sequence[float]) -> float:
    """Mean absolute error between two equal-length slot sequences."""
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape or p.size == 0:
        raise DomainError(f"length mismatch or empty: {p.shape} vs {a.shape}")
    return float(np.mean(np.abs(p - a)))


def average_flexibility(actual: Sequence[float]) -> float:
    """Mean absolute delivered flexibility over a horizon."""
    a = np.asarray(actual, dtype=float)
    if a.size == 0:
        raise DomainError("empty sequence")
    return float(np.mean(np.abs(a)))


def simple_score(mae_value: float, avg_flex: float) -> float:
    """Confidence in [0, 1]: max(1 - MAE / AvgFlex, 0).

    1 for a perfect predictor; 0 once the MAE is no better than a dummy
    predictor that always outputs zero. A coalition with zero average
    flexibility scores 0 by convention.
    """
    if mae_value < 0 or avg_flex < 0:
        raise DomainError("mae and average flexibility must be non-negative")
    if avg_flex == 0.0:
        return 0.0
    return float(max(1.0 - mae_value / avg_flex, 0.0))


def crps_raw(e, sigma):
    """Gaussian CRPS of a reported N(0, sigma^2) against a realized error e.

    sigma * [1/sqrt(pi) - 2*pdf(u) - u*(2*cdf(u) - 1)] with u = e/sigma.
    Always <= 0; approaches 0 only as sigma -> 0 with e = 0. Accepts arrays.
    """
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise DomainError("sigma must be positive")
    e = np.asarray(e, dtype=float)
    u = e / sigma
    out = sigma * (1.0 / _SQRT_PI - 2.0 * _std_normal_pdf(u) - u * (2.0 * _std_normal_cdf(u) - 1.0))
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=8)
def crps_floor(sigma_bounds: Tuple[float, float] = (0.01, 1.0),
               e_bounds: Tuple[float, float] = (-1.0, 1.0),
               resolution: float = 1e-3) -> float:
    """Most negative CRPS attainable over the error and sigma boxes.

    Found once by grid search at the given resolution and cached; used as
    the lower anchor of the [0, 1] normalization.
    """
    e_grid = np.arange(e_bounds[0], e_bounds[1] + resolution / 2, resolution)
    s_grid = np.arange(sigma_bounds[0], sigma_bounds[1] + resolution / 2, resolution)
    worst = 0.0
    for chunk in np.array_split(s_grid, max(1, s_grid.size // 64)):
        vals = crps_raw(e_grid[:, None], chunk[None, :])
        worst = min(worst, float(vals.min()))
    return worst


def crps_normalize(raw: float,
                   sigma_bounds: Tuple[float, float] = (0.01, 1.0),
                   e_bounds: Tuple[float, float] = (-1.0, 1.0)) -> float:
    """Affine map of a raw CRPS onto [0, 1]; 1 is the best attainable score."""
    floor = crps_floor(sigma_bounds, e_bounds)
    return float(np.clip((raw - floor) / (0.0 - floor), 0.0, 1.0))


def window_average(history: Sequence[float], w: int) -> float:
    """Mean of the last ``w`` scores; a coalition with no history scores 0."""
    if w < 1:
        raise DomainError("window must be >= 1")
    if len(history) == 0:
        return 0.0
    tail = history[-w:]
    return float(np.mean(tail))


def pool_crps(weights: Sequence[float], member_scores: Sequence[float],
              clears_bar: Optional[Sequence[bool]] = None,
              dilution: float = 0.45,
              cancellation_score: Optional[float] = None,
              premium_cap: float = 0.03) -> float:
    """Coalition-level CRPS: the flexibility-weighted mean member score,
    credited for realized error cancellation and diluted by below-bar weight.

    ``cancellation_score`` is the CRPS of the pool's aggregate error; when
    pooling makes the combined forecast better-calibrated than its members
    it exceeds their mean, and that premium passes through up to
    ``premium_cap``. ``clears_bar`` flags members whose track record clears
    the aggregator's admission bar; every unit of flexibility carried for a
    below-bar member costs the pool ``dilution`` of that unit's share, which
    is what keeps carrying unreliable members unattractive.
    """
    w = np.asarray(weights, dtype=float)
    s = np.asarray(member_scores, dtype=float)
    if w.shape != s.shape or w.size == 0:
        raise DomainError("weights and scores must be equal-length and non-empty")
    if np.any(w < 0):
        raise DomainError("weights must be non-negative")
    if not 0.0 <= dilution <= 1.0:
        raise DomainError("dilution must be in [0, 1]")
    if premium_cap < 0:
        raise DomainError("premium_cap must be non-negative")
    total = w.sum()
    if total <= 0:
        return 0.0
    wmean = float(np.sum((w / total) * np.clip(s, 0.0, 1.0)))
    base = wmean
    if cancellation_score is not None:
        base = min(max(cancellation_score, wmean), (1.0 + premium_cap) * wmean)
    below_share = 0.0
    if clears_bar is not None:
        flags = np.asarray(clears_bar, dtype=bool)
        if flags.shape != w.shape:
            raise DomainError("clears_bar must match weights")
        below_share = float(np.sum(w[~flags]) / total)
    return base * (1.0 - dilution * below_share)


@dataclass(frozen=True)
class ScoreRecord:
    """Per-LFE, per-cycle accuracy bookkeeping."""

    lfe_id: str
    cycle_index: int
    mae: float
    avg_flex: float
    simple_score: float
    crps_raw: float
    crps_norm: float
    window_avg_simple: float
    window_avg_crps: float
