"""Grid-to-aggregator payment rules and aggregator-to-LFE profit division.

Three grid payment regimes: an accuracy bell curve, a CRPS-scaled variant,
and the plain two-price settlement used by today's markets. Two division
rules: error-weighted (budget balanced by construction) and CRPS-weighted
(implemented exactly as stated; any surplus or deficit is the aggregator's).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

from .errors import DomainError

DEFAULT_ALPHA = 1.6
DEFAULT_BETA = 4.0


def _log_volume(flex: float) -> float:
    # ln(flex) floored at 0: lots at or below one unit would otherwise earn
    # negative pay for positive delivery.
    if flex <= 1.0:
        return 0.0
    return math.log(flex)


def accuracy_factor(e: float, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA) -> float:
    """Bell-shaped accuracy multiplier 1 / (1 + alpha * e^beta), peak at e=0."""
    return 1.0 / (1.0 + alpha * e ** beta)


def grid_payment_accuracy(flex: float, e: float, p: float,
                          alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA) -> float:
    """Grid payment scaled by delivered volume and point-estimate accuracy.

    ln(flex) * flex / (1 + alpha * e^beta) * p. The same formula prices
    unselected coalitions trading directly, with their own error and volume.
    """
    if flex < 0:
        raise DomainError("flexibility must be non-negative")
    return _log_volume(flex) * flex * accuracy_factor(e, alpha, beta) * p


def split_accuracy(v: float, contributions: Mapping[str, Tuple[float, float]],
                   alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA,
                   fee: float = 0.0) -> Dict[str, float]:
    """Divide a payment by contribution share and accuracy weight.

    ``contributions`` maps lfe_id -> (flex_i, e_i). The normalization is
    solved so the shares sum exactly to (1 - fee) * v; ``fee`` is the
    optional fraction the aggregator withholds (0 by default).
    """
    if not contributions:
        return {}
    if not 0.0 <= fee < 1.0:
        raise DomainError("fee must be in [0, 1)")
    weighted = {
        lfe: flex * accuracy_factor(e, alpha, beta)
        for lfe, (flex, e) in contributions.items()
    }
    denom = sum(weighted.values())
    if denom <= 0.0:
        return {lfe: 0.0 for lfe in contributions}
    payout = (1.0 - fee) * v
    return {lfe: payout * wgt / denom for lfe, wgt in weighted.items()}


def grid_payment_crps(flex: float, crps_norm: float, p: float) -> float:
    """Grid payment with the pool's normalized CRPS as the accuracy factor."""
    if flex < 0:
        raise DomainError("flexibility must be non-negative")
    return crps_norm * _log_volume(flex) * flex * p


def split_crps(v: float, members: Mapping[str, Tuple[float, float]],
               crps_agg: float) -> Dict[str, float]:
    """CRPS-weighted division: V_i = crps_agg * flex_i * v / sum(crps_j * flex_j).

    ``members`` maps lfe_id -> (flex_i, crps_norm_i). The shares sum to
    v * crps_agg * sum(flex) / sum(crps_j * flex_j), which equals v only when
    every member scores exactly crps_agg; the caller books the difference to
    the aggregator. A zero denominator leaves everything with the aggregator.
    """
    if not members:
        return {}
    denom = sum(crps * flex for flex, crps in members.values())
    if denom <= 0.0:
        return {lfe: 0.0 for lfe in members}
    return {lfe: crps_agg * flex * v / denom for lfe, (flex, _) in members.items()}


def grid_payment_simple(predicted: float, delivered: float, p: float, p_c: float) -> float:
    """Two-price settlement: pre-agreed price up to the promised volume,
    delivery-time price for any excess.

    Under-delivery pays for what arrived at the pre-agreed price; there is
    no explicit shortfall penalty.
    """
    if min(predicted, delivered, p, p_c) < 0:
        raise DomainError("inputs must be non-negative")
    flex_diff = delivered - predicted
    if flex_diff <= 0:
        return delivered * p
    return predicted * p + flex_diff * p_c


@dataclass
class PaymentLedger:
    """Money moved in one trading cycle, in euros."""

    cycle_index: int
    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA
    v_grid_agg: float = 0.0
    v_agg_lfe: Dict[str, float] = field(default_factory=dict)
    v_grid_lfe_direct: Dict[str, float] = field(default_factory=dict)
    aggregator_margin: float = 0.0

    def total_grid_outflow(self) -> float:
        return self.v_grid_agg + sum(self.v_grid_lfe_direct.values())

    def total_lfe_receipts(self) -> float:
        return sum(self.v_agg_lfe.values()) + sum(self.v_grid_lfe_direct.values())
