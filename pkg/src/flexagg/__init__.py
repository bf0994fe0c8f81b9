"""flexagg: a multiagent flexibility-aggregation market simulator.

Coalitions of distributed energy resources forecast and sell their pooled
flexibility either through an aggregator (which picks its pool with scoring
rules or a deep Q-network and divides the proceeds) or directly to the grid.
"""

from .der import (DerAsset, DerKind, Direction, FleetSpec, PAPER_FLEET,
                  aggregator_flexibility, asset_flexibility, generate_fleet,
                  lfe_flexibility)
from .errors import ConfigError, DomainError
from .forecast import (AccuracyMode, ErrorProcess, Forecast, predict,
                       rank_spread_sigmas, relative_error, step_accuracy)
from .harness import (ExperimentResult, RunMetrics, ScenarioConfig,
                      compare_methods, load_config, run_experiment,
                      scenario_defaults, write_metrics_csv)
from .market import EngineParams, PriceProcess, TradingCycle, TradingEngine
from .pricing import (PaymentLedger, grid_payment_accuracy, grid_payment_crps,
                      grid_payment_simple, split_accuracy, split_crps)
from .rl import (DqnAgent, DqnHyperParams, QNetwork, ReplayBuffer, RewardSpec,
                 reward_r1, reward_r2, train_step)
from .scoring import (ScoreRecord, crps_normalize, crps_raw, mae, pool_crps,
                      simple_score, window_average)
from .selection import (SelectionDecision, SelectionMethod, ids_to_mask,
                        mask_to_ids, select_all, select_dqn, select_none,
                        select_threshold)

__version__ = "0.1.0"
