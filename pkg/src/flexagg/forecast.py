"""Coalition-level flexibility forecasting with a per-LFE Gaussian error process.

Each LFE predicts its next-day flexibility path; predictions are the true
path perturbed by multiplicative Gaussian noise whose standard deviation is
the LFE's accuracy parameter. In the dynamic regime that parameter follows a
biased random walk so the initially-good predictors degrade while the
initially-bad ones improve.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Sequence, Tuple

import numpy as np

from .errors import DomainError

DEFAULT_SIGMA_BOUNDS = (0.01, 1.0)
DEFAULT_DRIFT_STEP = 0.001
DEFAULT_DRIFT_BIAS = 0.6


class AccuracyMode(Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


@dataclass
class ErrorProcess:
    """Accuracy state of one LFE's predictor.

    ``sigma`` is the std-dev of the relative prediction error. In dynamic
    mode it moves by ``drift_step`` per timeslot, biased (probability
    ``drift_bias``) toward degrading predictors that start below the middle
    of ``sigma_bounds`` and improving those that start above it, so the two
    populations converge over a run.
    """

    sigma: float
    mode: AccuracyMode = AccuracyMode.STATIC
    drift_step: float = DEFAULT_DRIFT_STEP
    drift_bias: float = DEFAULT_DRIFT_BIAS
    sigma_bounds: Tuple[float, float] = DEFAULT_SIGMA_BOUNDS
    rng_seed: int = 0
    misreport_factor: float = 1.0
    _rng: np.random.Generator = field(init=False, repr=False)
    _drift_direction: int = field(init=False, repr=False)

    def __post_init__(self):
        lo, hi = self.sigma_bounds
        if not (0.0 <= lo < hi <= 1.0):
            raise DomainError(f"sigma_bounds {self.sigma_bounds} not within [0, 1]")
        if not lo <= self.sigma <= hi:
            raise DomainError(f"sigma {self.sigma} outside bounds {self.sigma_bounds}")
        if not 0.0 <= self.drift_bias <= 1.0:
            raise DomainError("drift_bias is a probability")
        self._rng = np.random.default_rng(self.rng_seed)
        midpoint = 0.5 * (lo + hi)
        # +1 drifts upward (degrade): applied to the good half of the field.
        self._drift_direction = 1 if self.sigma < midpoint else -1

    @property
    def reported_sigma(self) -> float:
        return max(self.sigma * self.misreport_factor, 1e-9)


@dataclass(frozen=True)
class Forecast:
    """A 24-slot prediction plus the reported uncertainty."""

    lfe_id: str
    predicted: np.ndarray
    reported_sigma: float

    def __post_init__(self):
        if np.any(self.predicted < 0):
            raise DomainError("predicted flexibility must be non-negative")
        if self.reported_sigma <= 0:
            raise DomainError("reported sigma must be positive")


def predict(actual_flex: Sequence[float], proc: ErrorProcess, lfe_id: str = "") -> Forecast:
    """Noisy forecast of a known actual path.

    predicted[j] = max(0, actual[j] * (1 + eps_j)) with eps_j ~ N(0, sigma^2)
    drawn independently per slot; negative draws are floored because
    flexibility cannot be negative.
    """
    actual = np.asarray(actual_flex, dtype=float)
    eps = proc._rng.normal(0.0, proc.sigma, size=actual.shape)
    predicted = np.maximum(0.0, actual * (1.0 + eps))
    return Forecast(lfe_id=lfe_id, predicted=predicted, reported_sigma=proc.reported_sigma)


def step_accuracy(proc: ErrorProcess) -> float:
    """Advance the accuracy random walk by one timeslot.

    No-op in static mode. Dynamic mode moves sigma by +/- drift_step, with
    probability ``drift_bias`` in the process's drift direction, clamped to
    ``sigma_bounds``. Returns the new sigma.
    """
    if proc.mode is AccuracyMode.STATIC:
        return proc.sigma
    toward = proc._rng.random() < proc.drift_bias
    step = proc.drift_step if toward else -proc.drift_step
    lo, hi = proc.sigma_bounds
    proc.sigma = float(np.clip(proc.sigma + proc._drift_direction * step, lo, hi))
    return proc.sigma


def relative_error(actual: float, predicted: float) -> float:
    """Relative prediction error (actual - predicted) / predicted in [-1, 1].

    A zero prediction scores 0 when nothing was delivered and the worst
    error (+1) when something was.
    """
    if actual < 0 or predicted < 0:
        raise DomainError("flexibility values must be non-negative")
    if predicted == 0.0:
        return 0.0 if actual == 0.0 else 1.0
    e = (actual - predicted) / predicted
    return float(np.clip(e, -1.0, 1.0))


def rank_spread_sigmas(count: int, bounds: Tuple[float, float] = DEFAULT_SIGMA_BOUNDS) -> List[float]:
    """Initial sigma per rank, spread linearly from best to worst predictor."""
    lo, hi = bounds
    if count == 1:
        return [lo]
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]
