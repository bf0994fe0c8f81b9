"""Experiment harness: scenario matrix, multi-seed runner, metrics and CSVs.

The four scenarios cross static-vs-dynamic coalition accuracy with the
CRPS-style vs plain grid payment. Runs sharing a master seed share the
fleet, the price path and every forecast draw, so realized deliveries are
identical across methods and payment comparisons are like-for-like.
"""
from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import der, forecast as fc
from .errors import ConfigError
from .market import EngineParams, PriceProcess, TradingEngine
from .rl import DqnAgent, DqnHyperParams, RewardSpec
from .selection import SelectionMethod, ids_to_mask

#: Table of (accuracy_mode, grid_payment) per scenario id.
SCENARIO_TABLE: Dict[int, Tuple[str, str]] = {
    1: ("static", "crps"),
    2: ("dynamic", "crps"),
    3: ("static", "simple"),
    4: ("dynamic", "simple"),
}

CSV_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ScenarioConfig:
    """One cell of the experiment matrix plus every tunable the run needs."""

    scenario_id: int = 1
    method: SelectionMethod = SelectionMethod.CRPS_THRESHOLD
    accuracy_mode: str = "static"
    grid_payment: str = "crps"
    lfe_count: int = 12
    cycles: int = 80
    seeds: Tuple[int, ...] = (11, 12, 13, 14, 15)
    window: int = 3
    tau_simple: float = 0.7
    tau_crps: float = 0.77
    alpha: float = 1.6
    beta: float = 4.0
    aggregator_fee: float = 0.0
    sigma_low: float = 0.01
    sigma_high: float = 1.0
    drift_step: float = 0.001
    drift_bias: float = 0.6
    flex_log_unit: str = "kwh"
    aggregate_crps_mode: str = "quality_gated"
    pool_quality_bar: float = 0.77
    pool_dilution: float = 0.45
    pool_premium_cap: float = 0.03
    weather_sigma: float = 0.08
    price_base: float = 120.0
    price_noise_sigma: float = 10.0
    price_mean_reversion: float = 0.3
    delivery_discount: float = 0.55
    delivery_noise_sigma: float = 4.0
    renewable_peak_mwh: float = 13.0
    consumption_peak_mwh: float = 14.0
    storage_total_mwh: float = 7.5
    bess_share_mwh: float = 2.5
    dqn_hidden_dims: Tuple[int, ...] = (32, 64, 128, 128, 256)
    dqn_dropout_p: float = 0.2
    dqn_gamma: float = 0.9
    dqn_lr: float = 1e-4
    dqn_batch_size: int = 32
    dqn_buffer: int = 10_000
    dqn_target_sync: int = 100
    dqn_epsilon_start: float = 1.0
    dqn_epsilon_end: float = 0.05
    dqn_epsilon_anneal_frac: float = 0.5
    dqn_z_norm: Optional[float] = None

    def validate(self) -> None:
        if self.scenario_id not in SCENARIO_TABLE:
            raise ConfigError(f"scenario_id must be 1..4, got {self.scenario_id}")
        want_mode, want_payment = SCENARIO_TABLE[self.scenario_id]
        if self.accuracy_mode != want_mode:
            raise ConfigError(
                f"accuracy_mode={self.accuracy_mode!r} inconsistent with "
                f"scenario {self.scenario_id} (expected {want_mode!r})")
        if self.grid_payment != want_payment:
            raise ConfigError(
                f"grid_payment={self.grid_payment!r} inconsistent with "
                f"scenario {self.scenario_id} (expected {want_payment!r})")
        if self.lfe_count < 1:
            raise ConfigError("lfe_count must be >= 1")
        if self.cycles < 1:
            raise ConfigError("cycles must be >= 1")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not 0.0 <= self.sigma_low < self.sigma_high <= 1.0:
            raise ConfigError("sigma bounds must satisfy 0 <= low < high <= 1")
        for name in ("tau_simple", "tau_crps"):
            tau = getattr(self, name)
            if not 0.0 <= tau <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {tau}")
        if self.method.is_dqn and self.lfe_count > 14:
            raise ConfigError("DQN selection supports at most 14 coalitions; "
                              "use a threshold method")

    def fleet_spec(self) -> der.FleetSpec:
        return der.FleetSpec(self.lfe_count, self.renewable_peak_mwh,
                             self.consumption_peak_mwh, self.storage_total_mwh,
                             self.bess_share_mwh)

    def engine_params(self) -> EngineParams:
        return EngineParams(
            window=self.window, tau_simple=self.tau_simple, tau_crps=self.tau_crps,
            alpha=self.alpha, beta=self.beta, aggregator_fee=self.aggregator_fee,
            sigma_bounds=(self.sigma_low, self.sigma_high),
            flex_log_unit=self.flex_log_unit,
            aggregate_crps_mode=self.aggregate_crps_mode,
            pool_quality_bar=self.pool_quality_bar,
            pool_dilution=self.pool_dilution,
            pool_premium_cap=self.pool_premium_cap,
            weather_sigma=self.weather_sigma,
        )

    def config_hash(self) -> str:
        blob = ";".join(f"{f.name}={getattr(self, f.name)}" for f in fields(self))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def scenario_defaults(scenario_id: int, **overrides) -> ScenarioConfig:
    """Config for one Table cell; dynamic scenarios default to a longer
    horizon so the accuracy random walk has room to mix the populations."""
    mode, payment = SCENARIO_TABLE[scenario_id]
    base = dict(scenario_id=scenario_id, accuracy_mode=mode, grid_payment=payment)
    if mode == "dynamic":
        base["cycles"] = 140
    base.update(overrides)
    cfg = ScenarioConfig(**base)
    cfg.validate()
    return cfg


# -- config files -------------------------------------------------------------

_TUPLE_INT_FIELDS = {"seeds", "dqn_hidden_dims"}


def _coerce(name: str, raw: str):
    field_types = {f.name: f.type for f in fields(ScenarioConfig)}
    if name not in field_types:
        raise ConfigError(f"unknown config key {name!r}")
    raw = raw.strip()
    if name == "method":
        try:
            return SelectionMethod(raw)
        except ValueError:
            raise ConfigError(f"unknown method {raw!r}; one of "
                              f"{[m.value for m in SelectionMethod]}") from None
    if name in _TUPLE_INT_FIELDS:
        return tuple(int(x) for x in raw.replace(",", " ").split())
    if name == "dqn_z_norm":
        return None if raw in ("", "none", "adaptive") else float(raw)
    default = getattr(ScenarioConfig(), name)
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config_text(text: str, overrides: Sequence[str] = ()) -> ScenarioConfig:
    """Parse the key = value experiment file format (# starts a comment)."""
    values: Dict[str, object] = {}
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, raw = line.split("=", 1)
        values[key.strip()] = _coerce(key.strip(), raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        values[key.strip()] = _coerce(key.strip(), raw)
    scenario_id = int(values.pop("scenario_id", 1))
    mode, payment = SCENARIO_TABLE.get(scenario_id, (None, None))
    if mode is None:
        raise ConfigError(f"scenario_id must be 1..4, got {scenario_id}")
    values.setdefault("accuracy_mode", mode)
    values.setdefault("grid_payment", payment)
    cfg = ScenarioConfig(scenario_id=scenario_id, **values)
    cfg.validate()
    return cfg


def load_config(path: str | Path, overrides: Sequence[str] = ()) -> ScenarioConfig:
    return parse_config_text(Path(path).read_text(), overrides)


# -- engine construction -------------------------------------------------------

def _seed_streams(master: int) -> Dict[str, int]:
    return {"fleet": master, "price": master + 1_000, "weather": master + 2_000,
            "forecast": master + 3_000, "dqn": master + 4_000}


def build_engine(cfg: ScenarioConfig, master_seed: int,
                 method: Optional[SelectionMethod] = None) -> TradingEngine:
    """Assemble fleet, error processes, prices and (if needed) the DQN agent."""
    cfg.validate()
    method = method or cfg.method
    seeds = _seed_streams(master_seed)
    fleet = der.generate_fleet(cfg.fleet_spec(), seeds["fleet"])
    lfe_ids = sorted(fleet)
    sigmas = fc.rank_spread_sigmas(cfg.lfe_count, (cfg.sigma_low, cfg.sigma_high))
    mode = fc.AccuracyMode(cfg.accuracy_mode)
    processes = {
        lfe: fc.ErrorProcess(
            sigma=sigmas[i], mode=mode, drift_step=cfg.drift_step,
            drift_bias=cfg.drift_bias, sigma_bounds=(cfg.sigma_low, cfg.sigma_high),
            rng_seed=seeds["forecast"] + i)
        for i, lfe in enumerate(lfe_ids)
    }
    prices = PriceProcess(
        base=cfg.price_base, noise_sigma=cfg.price_noise_sigma,
        mean_reversion=cfg.price_mean_reversion, seed=seeds["price"],
        delivery_discount=cfg.delivery_discount,
        delivery_noise_sigma=cfg.delivery_noise_sigma)
    agent = None
    if method.is_dqn:
        hp = DqnHyperParams(
            hidden_dims=cfg.dqn_hidden_dims, dropout_p=cfg.dqn_dropout_p,
            gamma=cfg.dqn_gamma, lr=cfg.dqn_lr, batch_size=cfg.dqn_batch_size,
            buffer_capacity=cfg.dqn_buffer, target_sync_every=cfg.dqn_target_sync,
            epsilon_start=cfg.dqn_epsilon_start, epsilon_end=cfg.dqn_epsilon_end,
            epsilon_anneal_frac=cfg.dqn_epsilon_anneal_frac)
        reward = RewardSpec("r1" if method is SelectionMethod.DQN_R1 else "r2",
                            cfg.dqn_z_norm)
        agent = DqnAgent(cfg.lfe_count, reward, cfg.cycles, hp, seed=seeds["dqn"])
    return TradingEngine(
        fleet=fleet, processes=processes, price_process=prices, method=method,
        grid_payment=cfg.grid_payment, params=cfg.engine_params(),
        dqn_agent=agent, horizon_cycles=cfg.cycles, weather_seed=seeds["weather"])


# -- metrics -------------------------------------------------------------------

@dataclass
class LfeMetrics:
    eur: float = 0.0
    mwh: float = 0.0
    mwh_via_agg: float = 0.0
    mwh_direct: float = 0.0

    @property
    def eur_per_mwh(self) -> float:
        return self.eur / self.mwh if self.mwh > 0 else 0.0

    @property
    def share_agg(self) -> float:
        return self.mwh_via_agg / self.mwh if self.mwh > 0 else 0.0


@dataclass
class RunMetrics:
    """Metric families for one (config, seed) run."""

    scenario_id: int
    method: str
    seed: int
    per_lfe: Dict[str, LfeMetrics]
    agg_eur: float
    agg_mwh: float
    agg_margin: float
    selection_masks: List[int]
    reward_curve: List[float]

    @property
    def agg_eur_per_mwh(self) -> float:
        return self.agg_eur / self.agg_mwh if self.agg_mwh > 0 else 0.0

    @property
    def total_mwh(self) -> float:
        return sum(m.mwh for m in self.per_lfe.values())

    @property
    def total_eur(self) -> float:
        return sum(m.eur for m in self.per_lfe.values())


def run_single(cfg: ScenarioConfig, master_seed: int,
               method: Optional[SelectionMethod] = None) -> RunMetrics:
    engine = build_engine(cfg, master_seed, method)
    engine.run(cfg.cycles)
    return collect_metrics(engine, cfg, master_seed)


def collect_metrics(engine: TradingEngine, cfg: ScenarioConfig, seed: int) -> RunMetrics:
    per_lfe = {l: LfeMetrics() for l in engine.lfe_ids}
    agg_eur = agg_mwh = margin = 0.0
    masks: List[int] = []
    rewards: List[float] = []
    for cyc in engine.cycles:
        for l in engine.lfe_ids:
            m = per_lfe[l]
            m.eur += cyc.ledger.v_agg_lfe.get(l, 0.0) + cyc.ledger.v_grid_lfe_direct.get(l, 0.0)
            m.mwh_via_agg += cyc.mwh_via_agg[l]
            m.mwh_direct += cyc.mwh_direct[l]
            m.mwh += cyc.mwh_via_agg[l] + cyc.mwh_direct[l]
        agg_eur += cyc.ledger.v_grid_agg
        agg_mwh += sum(cyc.mwh_via_agg.values())
        margin += cyc.ledger.aggregator_margin
        masks.append(ids_to_mask(cyc.decision.selected, engine.lfe_ids))
        if cyc.reward is not None:
            rewards.append(cyc.reward)
    return RunMetrics(cfg.scenario_id, (engine.method).value, seed, per_lfe,
                      agg_eur, agg_mwh, margin, masks, rewards)


@dataclass
class ExperimentResult:
    config: ScenarioConfig
    runs: List[RunMetrics]

    def mean_lfe_eur_per_mwh(self) -> Dict[str, float]:
        lfes = sorted(self.runs[0].per_lfe)
        return {l: float(np.mean([r.per_lfe[l].eur_per_mwh for r in self.runs]))
                for l in lfes}

    def mean_lfe_share_agg(self) -> Dict[str, float]:
        lfes = sorted(self.runs[0].per_lfe)
        return {l: float(np.mean([r.per_lfe[l].share_agg for r in self.runs]))
                for l in lfes}

    def mean_agg_eur_per_mwh(self) -> float:
        return float(np.mean([r.agg_eur_per_mwh for r in self.runs]))

    def selection_frequency(self) -> Dict[str, float]:
        """Fraction of cycles each coalition was in the aggregator pool."""
        lfes = sorted(self.runs[0].per_lfe)
        freq = {l: 0.0 for l in lfes}
        total = sum(len(r.selection_masks) for r in self.runs)
        for r in self.runs:
            for mask in r.selection_masks:
                for i, l in enumerate(lfes):
                    if mask >> i & 1:
                        freq[l] += 1.0
        return {l: v / total for l, v in freq.items()}


def _run_seed_task(args) -> RunMetrics:
    cfg, seed = args
    return run_single(cfg, seed)


def run_experiment(cfg: ScenarioConfig, jobs: int = 1) -> ExperimentResult:
    """Execute every configured seed and aggregate; seeds are independent, so
    they can fan out across a worker pool."""
    cfg.validate()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_run_seed_task, [(cfg, s) for s in cfg.seeds]))
    else:
        runs = [run_single(cfg, s) for s in cfg.seeds]
    return ExperimentResult(cfg, runs)


@dataclass
class ComparisonTable:
    methods: List[str]
    eur_per_mwh: Dict[str, Dict[str, float]]  # lfe -> method -> value
    best_method: Dict[str, str]
    delivered_mwh: Dict[str, float]


def compare_methods(cfgs: Sequence[ScenarioConfig], jobs: int = 1) -> ComparisonTable:
    """Side-by-side per-LFE earnings for configs differing only in method or
    payment fields; shared seeds guarantee identical realized flexibility."""
    if not cfgs:
        raise ConfigError("no configs to compare")
    ref = cfgs[0]
    for cfg in cfgs[1:]:
        if cfg.seeds != ref.seeds:
            raise ConfigError("compared configs must share seeds")
        same_fleet = (cfg.lfe_count, cfg.renewable_peak_mwh, cfg.consumption_peak_mwh,
                      cfg.storage_total_mwh, cfg.bess_share_mwh) == \
                     (ref.lfe_count, ref.renewable_peak_mwh, ref.consumption_peak_mwh,
                      ref.storage_total_mwh, ref.bess_share_mwh)
        if not same_fleet:
            raise ConfigError("compared configs must share the fleet spec")
    results = [run_experiment(cfg, jobs=jobs) for cfg in cfgs]
    lfes = sorted(results[0].runs[0].per_lfe)
    method_names = [cfg.method.value for cfg in cfgs]
    delivered = {l: float(np.mean([r.per_lfe[l].mwh for r in results[0].runs])) for l in lfes}
    for res in results[1:]:
        for l in lfes:
            got = float(np.mean([r.per_lfe[l].mwh for r in res.runs]))
            if abs(got - delivered[l]) > 1e-6 * max(delivered[l], 1.0):
                raise ConfigError(f"delivered MWh for {l} differs across methods; "
                                  f"seed wiring is broken")
    table = {l: {m: res.mean_lfe_eur_per_mwh()[l]
                 for m, res in zip(method_names, results)} for l in lfes}
    best = {l: max(table[l], key=table[l].get) for l in lfes}
    return ComparisonTable(method_names, table, best, delivered)


# -- CSV output ------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _header(cfg: ScenarioConfig, name: str) -> str:
    return (f"# flexagg csv schema v{CSV_SCHEMA_VERSION} table={name} "
            f"config_hash={cfg.config_hash()} scenario={cfg.scenario_id} "
            f"alpha={cfg.alpha} beta={cfg.beta} flex_log_unit={cfg.flex_log_unit} "
            f"aggregate_crps_mode={cfg.aggregate_crps_mode} "
            f"pool_quality_bar={cfg.pool_quality_bar} pool_dilution={cfg.pool_dilution} "
            f"price_base={cfg.price_base}\n")


def write_metrics_csv(out_dir: str | Path, results: Sequence[ExperimentResult]) -> List[Path]:
    """Emit the four metric tables; row order is (scenario, method, lfe, seed)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = sorted(results, key=lambda r: (r.config.scenario_id, r.config.method.value))
    cfg0 = ordered[0].config

    paths = []
    p = out / "metrics_per_lfe.csv"
    with open(p, "w", encoding="utf-8", newline="\n") as f:
        f.write(_header(cfg0, "metrics_per_lfe"))
        f.write("scenario,method,lfe_id,seed,eur,mwh,eur_per_mwh,mwh_via_agg,mwh_direct,share_agg\n")
        for res in ordered:
            for run in sorted(res.runs, key=lambda r: r.seed):
                for l in sorted(run.per_lfe):
                    m = run.per_lfe[l]
                    f.write(",".join([
                        str(res.config.scenario_id), res.config.method.value, l,
                        str(run.seed), _fmt(m.eur), _fmt(m.mwh), _fmt(m.eur_per_mwh),
                        _fmt(m.mwh_via_agg), _fmt(m.mwh_direct), _fmt(m.share_agg)]) + "\n")
    paths.append(p)

    p = out / "metrics_aggregator.csv"
    with open(p, "w", encoding="utf-8", newline="\n") as f:
        f.write(_header(cfg0, "metrics_aggregator"))
        f.write("scenario,method,seed,agg_eur,agg_mwh,agg_eur_per_mwh,agg_margin,total_mwh\n")
        for res in ordered:
            for run in sorted(res.runs, key=lambda r: r.seed):
                f.write(",".join([
                    str(res.config.scenario_id), res.config.method.value, str(run.seed),
                    _fmt(run.agg_eur), _fmt(run.agg_mwh), _fmt(run.agg_eur_per_mwh),
                    _fmt(run.agg_margin), _fmt(run.total_mwh)]) + "\n")
    paths.append(p)

    p = out / "selection_masks.csv"
    with open(p, "w", encoding="utf-8", newline="\n") as f:
        f.write(_header(cfg0, "selection_masks"))
        f.write("scenario,method,seed,cycle,mask,n_selected\n")
        for res in ordered:
            for run in sorted(res.runs, key=lambda r: r.seed):
                for cycle, mask in enumerate(run.selection_masks):
                    f.write(",".join([
                        str(res.config.scenario_id), res.config.method.value,
                        str(run.seed), str(cycle), str(mask),
                        str(bin(mask).count("1"))]) + "\n")
    paths.append(p)

    p = out / "reward_curve.csv"
    with open(p, "w", encoding="utf-8", newline="\n") as f:
        f.write(_header(cfg0, "reward_curve"))
        f.write("scenario,method,seed,cycle,reward\n")
        for res in ordered:
            for run in sorted(res.runs, key=lambda r: r.seed):
                for cycle, reward in enumerate(run.reward_curve):
                    f.write(",".join([
                        str(res.config.scenario_id), res.config.method.value,
                        str(run.seed), str(cycle), _fmt(reward)]) + "\n")
    paths.append(p)
    return paths
