"""DER asset models and flexibility computation.

Four asset classes are supported: battery storage (BESS), electric vehicles
(EV), interruptible loads and small renewable generators. Flexibility is the
power (kW) an asset can offer to, or absorb from, the grid in a given
hour-of-day slot. Slots are one hour long, so kW and kWh per slot coincide.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, Iterable, List, Sequence

import numpy as np

from .errors import ConfigError, DomainError

SLOTS_PER_DAY = 24

# Interruptible users can shift this fraction of their running load on request.
CURTAILMENT_FRACTION = 0.10

# EVs keep this fraction of capacity in reserve for travel unless configured.
DEFAULT_EV_RESERVE_FRACTION = 0.30


class DerKind(Enum):
    BESS = "bess"
    EV = "ev"
    INTERRUPTIBLE_LOAD = "interruptible_load"
    GENERATOR = "generator"


class Direction(Enum):
    OFFER = "offer"    # deliver energy to the grid (discharge / generate / curtail)
    ABSORB = "absorb"  # take energy from the grid (charge)


@dataclass
class DerAsset:
    """One physical resource.

    ``capacity`` is kWh for storage kinds and peak kW for profile kinds.
    ``base_load_profile`` holds 24 hour-of-day kW values for loads and
    generators; storage kinds leave it empty.
    """

    id: str
    kind: DerKind
    capacity: float
    charge_rate: float = 0.0
    soc: float = 0.0
    reserve_floor: float = 0.0
    soc_target: float = 0.0
    base_load_profile: Sequence[float] = field(default_factory=tuple)

    def __post_init__(self):
        if self.capacity < 0:
            raise ConfigError(f"asset {self.id}: negative capacity")
        if self.kind in (DerKind.BESS, DerKind.EV):
            if not 0.0 <= self.soc <= self.capacity:
                raise ConfigError(f"asset {self.id}: soc {self.soc} outside [0, {self.capacity}]")
            if self.kind is DerKind.EV and self.reserve_floor > self.capacity:
                raise ConfigError(f"asset {self.id}: reserve floor above capacity")
        else:
            if any(v < 0 for v in self.base_load_profile):
                raise ConfigError(f"asset {self.id}: negative profile value")


@dataclass(frozen=True)
class FleetSpec:
    """City-scale fleet totals. Energies in MWh."""

    lfe_count: int
    renewable_peak: float
    consumption_peak: float
    storage_total: float
    bess_share: float

    def __post_init__(self):
        if self.lfe_count < 1:
            raise ConfigError("lfe_count must be >= 1")
        if self.bess_share > self.storage_total:
            raise ConfigError("bess_share exceeds storage_total")
        if min(self.renewable_peak, self.consumption_peak, self.storage_total, self.bess_share) < 0:
            raise ConfigError("fleet totals must be non-negative")


#: The fleet used throughout the experiments: 13 MWh renewable production at
#: peak, 14 MWh peak consumption, 7.5 MWh storage of which 2.5 MWh is BESS,
#: split across 12 coalitions.
PAPER_FLEET = FleetSpec(
    lfe_count=12,
    renewable_peak=13.0,
    consumption_peak=14.0,
    storage_total=7.5,
    bess_share=2.5,
)


def asset_flexibility(asset: DerAsset, slot: int, direction: Direction = Direction.OFFER) -> float:
    """Flexibility (kW) one asset can provide in an hour-of-day slot.

    Storage offers are rate-limited and bounded by the dischargeable energy
    (EVs keep ``reserve_floor`` untouched); absorption is bounded by headroom.
    Interruptible loads offer a fixed fraction of their running load, and
    generators offer their current production. The result is never negative.
    """
    if not 0 <= slot < SLOTS_PER_DAY:
        raise DomainError(f"slot {slot} outside [0, {SLOTS_PER_DAY})")
    if asset.kind is DerKind.BESS:
        if direction is Direction.OFFER:
            return min(asset.charge_rate, max(0.0, asset.soc))
        return min(asset.charge_rate, max(0.0, asset.capacity - asset.soc))
    if asset.kind is DerKind.EV:
        if direction is Direction.OFFER:
            return min(asset.charge_rate, max(0.0, asset.soc - asset.reserve_floor))
        return min(asset.charge_rate, max(0.0, asset.capacity - asset.soc))
    if asset.kind is DerKind.INTERRUPTIBLE_LOAD:
        return CURTAILMENT_FRACTION * asset.base_load_profile[slot]
    if asset.kind is DerKind.GENERATOR:
        return float(asset.base_load_profile[slot])
    raise ConfigError(f"unknown DER kind: {asset.kind!r}")


def lfe_flexibility(assets: Iterable[DerAsset], slot: int,
                    direction: Direction = Direction.OFFER) -> float:
    """Total flexibility of one coalition: the sum over its assets."""
    return sum(asset_flexibility(a, slot, direction) for a in assets)


def aggregator_flexibility(selected: Iterable[float]) -> float:
    """Pooled flexibility over the selected coalitions; empty pool is 0."""
    return float(sum(selected))


def _generator_shape(rng: np.random.Generator) -> np.ndarray:
    # Solar-like bell anchored to exactly 1.0 at 13:00 so fleet peak
    # production equals the sum of nameplate capacities.
    hours = np.arange(SLOTS_PER_DAY)
    shape = np.clip(np.sin(np.pi * (hours - 6.0) / 13.0), 0.0, None) ** 1.4
    jitter = 1.0 + rng.uniform(-0.08, 0.08, SLOTS_PER_DAY)
    shape = np.clip(shape * jitter, 0.0, 0.98)
    shape[13] = 1.0
    return shape


def _load_shape(rng: np.random.Generator) -> np.ndarray:
    # Household duck curve: morning shoulder, evening peak anchored at 19:00.
    base = np.array([
        0.38, 0.35, 0.33, 0.32, 0.33, 0.38, 0.52, 0.62, 0.60, 0.55, 0.52, 0.52,
        0.54, 0.52, 0.50, 0.52, 0.62, 0.80, 0.93, 1.00, 0.92, 0.76, 0.58, 0.45,
    ])
    jitter = 1.0 + rng.uniform(-0.06, 0.06, SLOTS_PER_DAY)
    shape = np.clip(base * jitter, 0.05, 0.97)
    shape[19] = 1.0
    return shape


def _split(total: float, parts: int, rng: np.random.Generator) -> np.ndarray:
    if parts == 1:
        return np.array([total])
    w = rng.dirichlet(np.full(parts, 6.0))
    return total * w


def generate_fleet(spec: FleetSpec, seed: int) -> Dict[str, List[DerAsset]]:
    """Randomly divide the fleet totals into heterogeneous coalitions.

    Every coalition receives a share of all four asset kinds (drawn from a
    Dirichlet, so shares are uneven but never vanish), split into one to
    three assets per kind. Generated totals match the spec exactly:
    generator and load profiles are anchored so the fleet-wide peak equals
    the sum of capacities. Deterministic for a given (spec, seed).
    """
    rng = np.random.default_rng(seed)
    n = spec.lfe_count
    lfe_ids = [f"LFE{i + 1:02d}" for i in range(n)]
    fleet: Dict[str, List[DerAsset]] = {lid: [] for lid in lfe_ids}

    kind_totals_kwh = {
        DerKind.GENERATOR: spec.renewable_peak * 1000.0,
        DerKind.INTERRUPTIBLE_LOAD: spec.consumption_peak * 1000.0,
        DerKind.BESS: spec.bess_share * 1000.0,
        DerKind.EV: (spec.storage_total - spec.bess_share) * 1000.0,
    }

    for kind, total in kind_totals_kwh.items():
        if total <= 0:
            continue
        shares = rng.dirichlet(np.full(n, 5.0)) * total
        for lid, lfe_total in zip(lfe_ids, shares):
            n_assets = int(rng.integers(1, 4))
            for k, cap in enumerate(_split(lfe_total, n_assets, rng)):
                aid = f"{lid}-{kind.value}-{k}"
                if kind is DerKind.BESS:
                    target = rng.uniform(0.6, 0.9)
                    fleet[lid].append(DerAsset(
                        id=aid, kind=kind, capacity=cap,
                        charge_rate=cap / 4.0 * rng.uniform(0.8, 1.2),
                        soc=target * cap, soc_target=target,
                    ))
                elif kind is DerKind.EV:
                    target = rng.uniform(0.65, 0.9)
                    fleet[lid].append(DerAsset(
                        id=aid, kind=kind, capacity=cap,
                        charge_rate=cap / 6.0 * rng.uniform(0.8, 1.2),
                        soc=target * cap, soc_target=target,
                        reserve_floor=DEFAULT_EV_RESERVE_FRACTION * cap,
                    ))
                elif kind is DerKind.GENERATOR:
                    fleet[lid].append(DerAsset(
                        id=aid, kind=kind, capacity=cap,
                        base_load_profile=tuple(cap * _generator_shape(rng)),
                    ))
                else:
                    fleet[lid].append(DerAsset(
                        id=aid, kind=kind, capacity=cap,
                        base_load_profile=tuple(cap * _load_shape(rng)),
                    ))

    for lid in lfe_ids:
        if not fleet[lid]:
            raise ConfigError(f"{lid} received no assets; fleet spec too small for lfe_count={n}")
    return fleet


def recharge_to_schedule(assets: Iterable[DerAsset]) -> None:
    """Overnight refill of storage assets toward their daily schedule."""
    for a in assets:
        if a.kind in (DerKind.BESS, DerKind.EV):
            a.soc = min(a.capacity, a.soc_target * a.capacity)


def realize_day(assets: List[DerAsset], weather: float = 1.0) -> np.ndarray:
    """Actual deliverable flexibility path for one day (24 kW values).

    Walks the day slot by slot: each slot's offer is computed from current
    state, then delivered in full (offered energy is always bought), which
    drains storage state of charge. ``weather`` scales generator output for
    day-to-day variation.
    """
    path = np.zeros(SLOTS_PER_DAY)
    for slot in range(SLOTS_PER_DAY):
        total = 0.0
        for a in assets:
            f = asset_flexibility(a, slot, Direction.OFFER)
            if a.kind is DerKind.GENERATOR:
                f *= weather
            total += f
            if a.kind in (DerKind.BESS, DerKind.EV):
                a.soc = max(0.0, a.soc - f)
        path[slot] = total
    return path
