import numpy as np
import pytest

from flexagg.der import (PAPER_FLEET, DerAsset, DerKind, Direction, FleetSpec,
                         aggregator_flexibility, asset_flexibility,
                         generate_fleet, lfe_flexibility, realize_day,
                         recharge_to_schedule)
from flexagg.errors import ConfigError, DomainError


def bess(capacity=100.0, soc=50.0, rate=10.0):
    return DerAsset(id="b", kind=DerKind.BESS, capacity=capacity,
                    charge_rate=rate, soc=soc)


def test_bess_offer_is_rate_limited():
    assert asset_flexibility(bess(), 5, Direction.OFFER) == 10.0


def test_bess_offer_limited_by_stored_energy():
    assert asset_flexibility(bess(soc=4.0), 5, Direction.OFFER) == 4.0


def test_bess_absorb_limited_by_headroom():
    assert asset_flexibility(bess(soc=95.0), 5, Direction.ABSORB) == 5.0


def test_ev_at_reserve_floor_offers_nothing():
    ev = DerAsset(id="e", kind=DerKind.EV, capacity=60.0, charge_rate=7.0,
                  soc=20.0, reserve_floor=20.0)
    assert asset_flexibility(ev, 0, Direction.OFFER) == 0.0


def test_ev_offers_only_above_floor():
    ev = DerAsset(id="e", kind=DerKind.EV, capacity=60.0, charge_rate=7.0,
                  soc=24.0, reserve_floor=20.0)
    assert asset_flexibility(ev, 0, Direction.OFFER) == 4.0


def test_interruptible_load_offers_ten_percent():
    il = DerAsset(id="l", kind=DerKind.INTERRUPTIBLE_LOAD, capacity=40.0,
                  base_load_profile=tuple([40.0] * 24))
    assert asset_flexibility(il, 12) == pytest.approx(4.0)


def test_generator_offers_current_production():
    profile = [0.0] * 24
    profile[12] = 33.0
    g = DerAsset(id="g", kind=DerKind.GENERATOR, capacity=33.0,
                 base_load_profile=tuple(profile))
    assert asset_flexibility(g, 12) == 33.0
    assert asset_flexibility(g, 0) == 0.0


def test_slot_out_of_range_rejected():
    with pytest.raises(DomainError):
        asset_flexibility(bess(), 24)


def test_asset_invariants_enforced():
    with pytest.raises(ConfigError):
        DerAsset(id="x", kind=DerKind.BESS, capacity=10.0, soc=11.0)
    with pytest.raises(ConfigError):
        DerAsset(id="x", kind=DerKind.EV, capacity=10.0, soc=5.0, reserve_floor=12.0)
    with pytest.raises(ConfigError):
        DerAsset(id="x", kind=DerKind.GENERATOR, capacity=5.0,
                 base_load_profile=(-1.0,) * 24)


def test_lfe_flexibility_sums_members():
    il = DerAsset(id="l", kind=DerKind.INTERRUPTIBLE_LOAD, capacity=40.0,
                  base_load_profile=tuple([40.0] * 24))
    assert lfe_flexibility([il, bess()], 3) == pytest.approx(4.0 + 10.0)
    assert lfe_flexibility([bess()], 3) == pytest.approx(10.0)


def test_lfe_flexibility_matches_per_asset_loop_on_generated_fleet():
    fleet = generate_fleet(PAPER_FLEET, seed=5)
    for assets in fleet.values():
        expected = 0.0
        for a in assets:
            expected += asset_flexibility(a, 12)
        assert lfe_flexibility(assets, 12) == pytest.approx(expected)


def test_aggregator_flexibility_sums():
    assert aggregator_flexibility([]) == 0.0
    assert aggregator_flexibility([1.0, 1.0, 1.0]) == 3.0


def test_flexibility_is_additive_over_random_partition():
    rng = np.random.default_rng(0)
    fleet = generate_fleet(PAPER_FLEET, seed=7)
    all_assets = [a for assets in fleet.values() for a in assets]
    flat_total = sum(asset_flexibility(a, 18) for a in all_assets)
    order = rng.permutation(len(all_assets))
    groups = np.array_split(order, 5)
    grouped = aggregator_flexibility(
        lfe_flexibility([all_assets[i] for i in g], 18) for g in groups)
    assert grouped == pytest.approx(flat_total)


def test_flexibility_never_negative():
    fleet = generate_fleet(PAPER_FLEET, seed=3)
    for assets in fleet.values():
        for a in assets:
            for slot in range(24):
                for d in Direction:
                    assert asset_flexibility(a, slot, d) >= 0.0


def test_generate_fleet_matches_spec_totals():
    fleet = generate_fleet(PAPER_FLEET, seed=11)
    caps = {k: 0.0 for k in DerKind}
    for assets in fleet.values():
        for a in assets:
            caps[a.kind] += a.capacity
    assert caps[DerKind.GENERATOR] / 1000.0 == pytest.approx(13.0, rel=0.01)
    assert caps[DerKind.INTERRUPTIBLE_LOAD] / 1000.0 == pytest.approx(14.0, rel=0.01)
    assert caps[DerKind.BESS] / 1000.0 == pytest.approx(2.5, rel=0.01)
    storage = (caps[DerKind.BESS] + caps[DerKind.EV]) / 1000.0
    assert storage == pytest.approx(7.5, rel=0.01)


def test_generate_fleet_peak_equals_capacity_sum():
    # Profiles are anchored so the fleet-wide generation peak hits the
    # renewable total exactly.
    fleet = generate_fleet(PAPER_FLEET, seed=11)
    gens = [a for assets in fleet.values() for a in assets
            if a.kind is DerKind.GENERATOR]
    peak = max(sum(a.base_load_profile[t] for a in gens) for t in range(24))
    assert peak / 1000.0 == pytest.approx(13.0, rel=1e-9)


def test_generate_fleet_single_lfe_gets_everything():
    spec = FleetSpec(1, 13.0, 14.0, 7.5, 2.5)
    fleet = generate_fleet(spec, seed=2)
    assert list(fleet) == ["LFE01"]
    assert len(fleet["LFE01"]) >= 4


def test_generate_fleet_deterministic():
    a = generate_fleet(PAPER_FLEET, seed=9)
    b = generate_fleet(PAPER_FLEET, seed=9)
    assert {k: [x.id for x in v] for k, v in a.items()} == \
           {k: [x.id for x in v] for k, v in b.items()}
    for lfe in a:
        for x, y in zip(a[lfe], b[lfe]):
            assert x.capacity == y.capacity and x.soc == y.soc


def test_generate_fleet_heterogeneous():
    fleet = generate_fleet(PAPER_FLEET, seed=1)
    for assets in fleet.values():
        assert len({a.kind for a in assets}) >= 2


def test_fleet_spec_validation():
    with pytest.raises(ConfigError):
        FleetSpec(0, 13.0, 14.0, 7.5, 2.5)
    with pytest.raises(ConfigError):
        FleetSpec(12, 13.0, 14.0, 7.5, 9.0)


def test_realize_day_drains_storage_and_recharges():
    b = bess(capacity=100.0, soc=80.0, rate=10.0)
    b.soc_target = 0.8
    path = realize_day([b])
    assert path[:8].sum() == pytest.approx(80.0)  # drained to empty
    assert b.soc == 0.0
    recharge_to_schedule([b])
    assert b.soc == pytest.approx(80.0)
