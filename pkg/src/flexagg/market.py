"""Synthetic day-ahead price process and the 24-slot trading-cycle engine.

Each cycle: coalitions forecast tomorrow's flexibility, the aggregator picks
its pool, deliveries are realized from the DER models, the grid settles with
the aggregator and with every unselected coalition directly, the aggregator
divides its payment, and everyone is re-scored. Offered energy is always
bought, so delivered flexibility equals the realizable path regardless of
selling channel.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import der, forecast as fc, pricing, scoring
from .errors import ConfigError, DomainError
from .rl import DqnAgent
from .selection import (SelectionDecision, SelectionMethod, ids_to_mask,
                        select_all, select_dqn, select_none, select_threshold)

KWH_PER_MWH = 1000.0


def default_daily_shape() -> np.ndarray:
    """Price multipliers with late-morning and evening peaks and a night dip."""
    h = np.arange(der.SLOTS_PER_DAY, dtype=float)
    shape = (0.9
             + 0.25 * np.exp(-0.5 * ((h - 11.0) / 2.2) ** 2)
             + 0.30 * np.exp(-0.5 * ((h - 19.0) / 2.2) ** 2)
             - 0.18 * np.exp(-0.5 * ((h - 3.5) / 2.5) ** 2))
    return shape


class PriceProcess:
    """Mean-reverting seasonal wholesale price path, one pair of 24-slot
    curves per day: the day-ahead price p and the delivery-time price p_c.

    The delivery price applies to volume beyond the committed amount and
    trades at a discount to the day-ahead price plus settlement noise.
    Prices never fall below 1. Deterministic per seed.
    """

    def __init__(self, base: float = 120.0, daily_shape: Optional[Sequence[float]] = None,
                 noise_sigma: float = 10.0, mean_reversion: float = 0.3,
                 seed: int = 0, delivery_discount: float = 0.55,
                 delivery_noise_sigma: float = 4.0):
        if base <= 0:
            raise ConfigError("base price must be positive")
        if not 0.0 < mean_reversion <= 1.0:
            raise ConfigError("mean_reversion must be in (0, 1]")
        self.base = base
        self.daily_shape = np.asarray(daily_shape if daily_shape is not None
                                      else default_daily_shape(), dtype=float)
        if self.daily_shape.shape != (der.SLOTS_PER_DAY,):
            raise ConfigError("daily_shape needs 24 entries")
        self.noise_sigma = noise_sigma
        self.mean_reversion = mean_reversion
        self.delivery_discount = delivery_discount
        self.delivery_noise_sigma = delivery_noise_sigma
        self._rng = np.random.default_rng(seed)
        self._x = 0.0
        self._days: List[Tuple[np.ndarray, np.ndarray]] = []

    def next_prices(self, day: int) -> Tuple[np.ndarray, np.ndarray]:
        """(p, p_c) for the given day index, both in EUR/MWh."""
        while len(self._days) <= day:
            self._generate_day()
        return self._days[day]

    def _generate_day(self) -> None:
        phi = 1.0 - self.mean_reversion
        innovation_sd = self.noise_sigma * np.sqrt(max(1.0 - phi * phi, 0.0))
        p = np.empty(der.SLOTS_PER_DAY)
        for t in range(der.SLOTS_PER_DAY):
            self._x = phi * self._x + self._rng.normal(0.0, innovation_sd)
            p[t] = self.base * self.daily_shape[t] + self._x
        p = np.maximum(p, 1.0)
        pc_noise = self._rng.normal(0.0, self.delivery_noise_sigma, der.SLOTS_PER_DAY)
        p_c = np.maximum(p * self.delivery_discount + pc_noise, 1.0)
        self._days.append((p, p_c))


@dataclass
class EngineParams:
    """Mechanism constants for one run; all recorded into output headers."""

    window: int = 3
    tau_simple: float = 0.7
    tau_crps: float = 0.77
    alpha: float = pricing.DEFAULT_ALPHA
    beta: float = pricing.DEFAULT_BETA
    aggregator_fee: float = 0.0
    sigma_bounds: Tuple[float, float] = fc.DEFAULT_SIGMA_BOUNDS
    #: Unit fed to the log-volume payment formulas ("kwh" or "mwh"). At city
    #: scale the kWh log stays in its flat regime; the MWh log zeroes out
    #: sub-1MWh lots.
    flex_log_unit: str = "kwh"
    #: Pool-level CRPS: "quality_gated" is the member mean taxed below a
    #: reference quality, "member_mean" the plain member mean, and
    #: "error_of_sums" scores the pool's aggregate error against its
    #: flexibility-weighted reported sigma.
    aggregate_crps_mode: str = "quality_gated"
    #: Track-record level a member must clear for its flexibility to count at
    #: par in the pooled score; aligned with the CRPS admission threshold.
    pool_quality_bar: float = 0.77
    pool_dilution: float = 0.45
    pool_premium_cap: float = 0.03
    weather_sigma: float = 0.08

    def __post_init__(self):
        if self.flex_log_unit not in ("kwh", "mwh"):
            raise ConfigError(f"flex_log_unit must be 'kwh' or 'mwh', got {self.flex_log_unit!r}")
        if self.aggregate_crps_mode not in ("quality_gated", "member_mean", "error_of_sums"):
            raise ConfigError(f"unknown aggregate_crps_mode {self.aggregate_crps_mode!r}")
        if self.window < 1:
            raise ConfigError("window must be >= 1")


@dataclass
class TradingCycle:
    """Everything settled in one day-ahead round."""

    day_index: int
    forecasts: Dict[str, fc.Forecast]
    decision: SelectionDecision
    deliveries: Dict[str, np.ndarray]
    ledger: pricing.PaymentLedger
    scores: Dict[str, scoring.ScoreRecord]
    prices: np.ndarray
    prices_delivery: np.ndarray
    crps_agg: float = 0.0
    reward: Optional[float] = None
    mwh_via_agg: Dict[str, float] = field(default_factory=dict)
    mwh_direct: Dict[str, float] = field(default_factory=dict)


class TradingEngine:
    """Advances one fleet through trading cycles under one selection method
    and one grid-payment regime."""

    def __init__(self, fleet: Dict[str, List[der.DerAsset]],
                 processes: Dict[str, fc.ErrorProcess],
                 price_process: PriceProcess,
                 method: SelectionMethod,
                 grid_payment: str = "crps",
                 params: EngineParams = EngineParams(),
                 dqn_agent: Optional[DqnAgent] = None,
                 horizon_cycles: int = 0,
                 weather_seed: int = 0):
        if grid_payment not in ("crps", "simple"):
            raise ConfigError(f"grid_payment must be 'crps' or 'simple', got {grid_payment!r}")
        if set(fleet) != set(processes):
            raise ConfigError("fleet and error processes cover different coalitions")
        if method.is_dqn and dqn_agent is None:
            raise ConfigError("DQN methods need a DqnAgent")
        self.fleet = fleet
        self.lfe_ids = sorted(fleet)
        self.processes = processes
        self.prices = price_process
        self.method = method
        self.grid_payment = grid_payment
        self.params = params
        self.agent = dqn_agent
        self.horizon_cycles = horizon_cycles
        self._weather_rng = np.random.default_rng(weather_seed)
        self.simple_history: Dict[str, List[float]] = {l: [] for l in self.lfe_ids}
        self.crps_history: Dict[str, List[float]] = {l: [] for l in self.lfe_ids}
        self.cycles: List[TradingCycle] = []
        self._flex_scale = 1.0
        self._pending: Optional[Tuple[np.ndarray, int, float, float]] = None

    # -- helpers -------------------------------------------------------------

    def _windows(self, history: Dict[str, List[float]]) -> Dict[str, float]:
        return {l: scoring.window_average(history[l], self.params.window)
                for l in self.lfe_ids}

    def _flex_in_log_unit(self, kwh: float) -> float:
        return kwh if self.params.flex_log_unit == "kwh" else kwh / KWH_PER_MWH

    def _price_per_log_unit(self, p_mwh: float) -> float:
        return p_mwh / KWH_PER_MWH if self.params.flex_log_unit == "kwh" else p_mwh

    def _dqn_state(self, forecasts: Dict[str, fc.Forecast],
                   crps_windows: Dict[str, float]) -> np.ndarray:
        totals = {l: float(np.sum(forecasts[l].predicted)) for l in self.lfe_ids}
        self._flex_scale = max(self._flex_scale, max(totals.values(), default=1.0))
        state = []
        for l in self.lfe_ids:
            state.append(crps_windows[l])
            state.append(totals[l] / self._flex_scale)
        return np.asarray(state)

    def _select(self, cycle_index: int, forecasts: Dict[str, fc.Forecast]) -> SelectionDecision:
        m = self.method
        if m is SelectionMethod.SIMPLE_THRESHOLD:
            return select_threshold(self._windows(self.simple_history),
                                    self.params.tau_simple, m, cycle_index)
        if m is SelectionMethod.CRPS_THRESHOLD:
            return select_threshold(self._windows(self.crps_history),
                                    self.params.tau_crps, m, cycle_index)
        if m is SelectionMethod.ALL_LFES:
            return select_all(self.lfe_ids, cycle_index)
        if m is SelectionMethod.SINGLETON:
            return select_none(self.lfe_ids, cycle_index)
        state = self._dqn_state(forecasts, self._windows(self.crps_history))
        if self._pending is not None:
            prev_state, prev_action, reward_value, v_agg = self._pending
            self.agent.observe(prev_state, prev_action, reward_value, state, v_agg)
            self._pending = None
        decision = select_dqn(state, self.agent.net, self.agent.epsilon(),
                              self.lfe_ids, self.agent.rng, m, cycle_index)
        self._last_dqn_state = state
        return decision

    # -- the cycle -----------------------------------------------------------

    def run_cycle(self) -> TradingCycle:
        cycle_index = len(self.cycles)
        weather = float(np.clip(self._weather_rng.normal(1.0, self.params.weather_sigma),
                                0.5, 1.5))

        # (1) overnight recharge, then realize today's deliverable path
        actuals: Dict[str, np.ndarray] = {}
        for l in self.lfe_ids:
            der.recharge_to_schedule(self.fleet[l])
            actuals[l] = der.realize_day(self.fleet[l], weather)

        # (2) 24h-ahead forecasts, submitted before the noon gate
        forecasts = {l: fc.predict(actuals[l], self.processes[l], l) for l in self.lfe_ids}

        # (3) pool selection from historic scores only
        decision = self._select(cycle_index, forecasts)
        selected = sorted(decision.selected)
        unselected = [l for l in self.lfe_ids if l not in decision.selected]

        # (4) realized accuracy for the day: per-slot errors, cycle-level scores
        p, p_c = self.prices.next_prices(cycle_index)
        params = self.params
        sigma_reported = {l: forecasts[l].reported_sigma for l in self.lfe_ids}
        slot_errors = {l: np.array([fc.relative_error(actuals[l][t], forecasts[l].predicted[t])
                                    for t in range(der.SLOTS_PER_DAY)])
                       for l in self.lfe_ids}
        cycle_norms = {l: scoring.crps_normalize(
                            float(np.mean(scoring.crps_raw(slot_errors[l], sigma_reported[l]))),
                            params.sigma_bounds)
                       for l in self.lfe_ids}
        crps_agg = self._pool_score(selected, actuals, forecasts, slot_errors, cycle_norms)

        # (5) settlement: grid pays per slot, the pool payment is divided once
        ledger = pricing.PaymentLedger(cycle_index, params.alpha, params.beta)
        ledger.v_agg_lfe = {l: 0.0 for l in self.lfe_ids}
        ledger.v_grid_lfe_direct = {l: 0.0 for l in self.lfe_ids}

        for t in range(der.SLOTS_PER_DAY):
            if selected:
                del_kwh = {l: float(actuals[l][t]) for l in selected}
                pred_agg = sum(float(forecasts[l].predicted[t]) for l in selected)
                del_agg = sum(del_kwh.values())
                e_agg = fc.relative_error(del_agg, pred_agg)
                v_t = self._grid_payment_agg(del_agg, pred_agg, e_agg, crps_agg,
                                             p[t], p_c[t])
                ledger.v_grid_agg += v_t
                if self.method is SelectionMethod.SIMPLE_THRESHOLD:
                    contributions = {l: (del_kwh[l], float(slot_errors[l][t]))
                                     for l in selected}
                    for l, share in pricing.split_accuracy(
                            v_t, contributions, params.alpha, params.beta,
                            params.aggregator_fee).items():
                        ledger.v_agg_lfe[l] += share
            for l in unselected:
                ledger.v_grid_lfe_direct[l] += self._grid_payment_direct(
                    float(actuals[l][t]), float(forecasts[l].predicted[t]),
                    float(slot_errors[l][t]), cycle_norms[l], p[t], p_c[t])

        if selected and self.method is not SelectionMethod.SIMPLE_THRESHOLD:
            members = {l: (float(np.sum(actuals[l])), cycle_norms[l]) for l in selected}
            ledger.v_agg_lfe.update(
                pricing.split_crps(ledger.v_grid_agg, members, crps_agg))

        ledger.aggregator_margin = ledger.v_grid_agg - sum(ledger.v_agg_lfe.values())

        # (6) re-score every coalition, selected or not
        records = self._rescore(cycle_index, forecasts, actuals, slot_errors,
                                sigma_reported, cycle_norms)

        # (7) dynamic accuracy drift advances one step per timeslot
        for l in self.lfe_ids:
            for _ in range(der.SLOTS_PER_DAY):
                fc.step_accuracy(self.processes[l])

        # (8) DQN reward bookkeeping (trained at the next selection point)
        reward_value = None
        if self.method.is_dqn:
            directs = [ledger.v_grid_lfe_direct[l] for l in unselected]
            reward_value = self.agent.compute_reward(ledger.v_grid_agg, directs)
            self._pending = (self._last_dqn_state, decision.action_index,
                             reward_value, ledger.v_grid_agg)

        cycle = TradingCycle(
            day_index=cycle_index, forecasts=forecasts, decision=decision,
            deliveries=actuals, ledger=ledger, scores=records,
            prices=p, prices_delivery=p_c, crps_agg=crps_agg, reward=reward_value,
            mwh_via_agg={l: float(np.sum(actuals[l])) / KWH_PER_MWH if l in decision.selected
                         else 0.0 for l in self.lfe_ids},
            mwh_direct={l: float(np.sum(actuals[l])) / KWH_PER_MWH if l not in decision.selected
                        else 0.0 for l in self.lfe_ids},
        )
        self.cycles.append(cycle)
        return cycle

    def run(self, n_cycles: int) -> List[TradingCycle]:
        for _ in range(n_cycles):
            self.run_cycle()
        return self.cycles

    # -- settlement pieces ----------------------------------------------------

    def _weighted_sigma(self, selected: List[str], forecasts: Dict[str, fc.Forecast]) -> float:
        if not selected:
            return self.params.sigma_bounds[0]
        weights = np.array([max(float(np.sum(forecasts[l].predicted)), 1e-9) for l in selected])
        sigmas = np.array([forecasts[l].reported_sigma for l in selected])
        return float(np.average(sigmas, weights=weights))

    def _pool_score(self, selected, actuals, forecasts, slot_errors, cycle_norms) -> float:
        """The pool's CRPS for the day, used in both its grid payment and the
        division of that payment among members."""
        if not selected:
            return 0.0
        mode = self.params.aggregate_crps_mode
        sigma_w = self._weighted_sigma(selected, forecasts)
        e_agg = np.array([
            fc.relative_error(sum(float(actuals[l][t]) for l in selected),
                              sum(float(forecasts[l].predicted[t]) for l in selected))
            for t in range(der.SLOTS_PER_DAY)])
        e_score = scoring.crps_normalize(float(np.mean(scoring.crps_raw(e_agg, sigma_w))),
                                         self.params.sigma_bounds)
        if mode == "error_of_sums":
            return e_score
        weights = np.array([max(float(np.sum(actuals[l])), 1e-9) for l in selected])
        member_norms = np.array([cycle_norms[l] for l in selected])
        if mode == "member_mean":
            return float(np.average(member_norms, weights=weights))
        # The bar uses the same track record selection sees, so threshold
        # pools are undiluted by construction.
        clears = [scoring.window_average(self.crps_history[l], self.params.window)
                  > self.params.pool_quality_bar for l in selected]
        return scoring.pool_crps(weights, member_norms, clears, self.params.pool_dilution,
                                 cancellation_score=e_score,
                                 premium_cap=self.params.pool_premium_cap)

    def _grid_payment_agg(self, del_agg_kwh, pred_agg_kwh, e_agg, crps_agg, p_mwh, pc_mwh) -> float:
        if self.grid_payment == "simple":
            return pricing.grid_payment_simple(pred_agg_kwh / KWH_PER_MWH,
                                               del_agg_kwh / KWH_PER_MWH, p_mwh, pc_mwh)
        flex = self._flex_in_log_unit(del_agg_kwh)
        price = self._price_per_log_unit(p_mwh)
        if self.method is SelectionMethod.SIMPLE_THRESHOLD:
            return pricing.grid_payment_accuracy(flex, e_agg, price,
                                                 self.params.alpha, self.params.beta)
        return pricing.grid_payment_crps(flex, crps_agg, price)

    def _grid_payment_direct(self, del_kwh, pred_kwh, e, crps_norm, p_mwh, pc_mwh) -> float:
        if self.grid_payment == "simple":
            return pricing.grid_payment_simple(pred_kwh / KWH_PER_MWH,
                                               del_kwh / KWH_PER_MWH, p_mwh, pc_mwh)
        flex = self._flex_in_log_unit(del_kwh)
        price = self._price_per_log_unit(p_mwh)
        if self.method is SelectionMethod.SIMPLE_THRESHOLD:
            return pricing.grid_payment_accuracy(flex, e, price,
                                                 self.params.alpha, self.params.beta)
        return pricing.grid_payment_crps(flex, crps_norm, price)

    def _rescore(self, cycle_index, forecasts, actuals, slot_errors, sigma_reported,
                 cycle_norms):
        records: Dict[str, scoring.ScoreRecord] = {}
        for l in self.lfe_ids:
            m = scoring.mae(forecasts[l].predicted, actuals[l])
            af = scoring.average_flexibility(actuals[l])
            s_score = scoring.simple_score(m, af)
            raw_cycle = float(np.mean(scoring.crps_raw(slot_errors[l], sigma_reported[l])))
            norm_cycle = cycle_norms[l]
            self.simple_history[l].append(s_score)
            self.crps_history[l].append(norm_cycle)
            records[l] = scoring.ScoreRecord(
                lfe_id=l, cycle_index=cycle_index, mae=m, avg_flex=af,
                simple_score=s_score, crps_raw=raw_cycle, crps_norm=norm_cycle,
                window_avg_simple=scoring.window_average(self.simple_history[l],
                                                         self.params.window),
                window_avg_crps=scoring.window_average(self.crps_history[l],
                                                       self.params.window),
            )
        return records
