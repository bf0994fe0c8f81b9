"""Coalition selection mechanisms available to the aggregator each cycle."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Dict, FrozenSet, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .rl import MAX_DQN_LFES, QNetwork


class SelectionMethod(Enum):
    SIMPLE_THRESHOLD = "simple_threshold"
    CRPS_THRESHOLD = "crps_threshold"
    DQN_R1 = "dqn_r1"
    DQN_R2 = "dqn_r2"
    ALL_LFES = "all_lfes"
    SINGLETON = "singleton"

    @property
    def is_dqn(self) -> bool:
        return self in (SelectionMethod.DQN_R1, SelectionMethod.DQN_R2)


@dataclass(frozen=True)
class SelectionDecision:
    cycle_index: int
    method: SelectionMethod
    selected: FrozenSet[str]
    threshold_used: Optional[float] = None
    action_index: Optional[int] = None


def select_threshold(window_scores: Dict[str, float], tau: float,
                     method: SelectionMethod, cycle_index: int = 0) -> SelectionDecision:
    """Pick every coalition whose window-averaged score strictly exceeds tau.

    Ties at exactly tau are excluded for determinism. An empty pick is
    legal: the aggregator simply sits the cycle out.
    """
    selected = frozenset(lfe for lfe, score in window_scores.items() if score > tau)
    return SelectionDecision(cycle_index, method, selected, threshold_used=tau)


def mask_to_ids(action_index: int, lfe_ids: Sequence[str]) -> FrozenSet[str]:
    """Decode an action index into coalition membership (bit i -> lfe_ids[i])."""
    return frozenset(lfe for i, lfe in enumerate(lfe_ids) if action_index >> i & 1)


def ids_to_mask(selected, lfe_ids: Sequence[str]) -> int:
    """Inverse of :func:`mask_to_ids`."""
    return sum(1 << i for i, lfe in enumerate(lfe_ids) if lfe in selected)


def select_dqn(state: np.ndarray, net: QNetwork, epsilon: float,
               lfe_ids: Sequence[str], rng: np.random.Generator,
               method: SelectionMethod = SelectionMethod.DQN_R1,
               cycle_index: int = 0) -> SelectionDecision:
    """Epsilon-greedy pick over the 2^n membership masks.

    ``state`` is the 2n-vector of per-coalition (crps_norm, scaled predicted
    flexibility). With probability epsilon a uniformly random mask is
    explored; otherwise the argmax Q action is taken.
    """
    n = len(lfe_ids)
    if n > MAX_DQN_LFES:
        raise ConfigError(
            f"{n} coalitions exceed the DQN action-space limit ({MAX_DQN_LFES}); "
            f"use a threshold method")
    n_actions = 2 ** n
    if net.output_dim != n_actions:
        raise ConfigError(f"network has {net.output_dim} outputs, expected {n_actions}")
    if rng.random() < epsilon:
        action = int(rng.integers(n_actions))
    else:
        q = net.forward(state, training=False)
        action = int(np.argmax(q))
    return SelectionDecision(cycle_index, method, mask_to_ids(action, lfe_ids),
                             action_index=action)


def select_all(lfe_ids: Sequence[str], cycle_index: int = 0) -> SelectionDecision:
    """Every coalition trades through the aggregator (no selection rule)."""
    return SelectionDecision(cycle_index, SelectionMethod.ALL_LFES, frozenset(lfe_ids))


def select_none(lfe_ids: Sequence[str], cycle_index: int = 0) -> SelectionDecision:
    """No aggregator pool at all: every coalition trades with the grid directly."""
    return SelectionDecision(cycle_index, SelectionMethod.SINGLETON, frozenset())
