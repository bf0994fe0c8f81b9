"""Command-line entry point.

Verbs: gen-fleet, run, compare, validate-config, export. Results land in the
output directory as CSVs; progress goes to stderr. Exit codes: 0 success,
1 configuration problem, 2 runtime simulation failure.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from . import der
from .errors import ConfigError, DomainError
from .harness import (ScenarioConfig, compare_methods, load_config,
                      run_experiment, scenario_defaults, write_metrics_csv)
from .selection import SelectionMethod


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _load(args) -> ScenarioConfig:
    overrides = list(args.set or [])
    if args.config:
        cfg = load_config(args.config, overrides)
    else:
        cfg = scenario_defaults(args.scenario or 1)
        for item in overrides:
            key, raw = item.split("=", 1)
            from .harness import _coerce
            cfg = replace(cfg, **{key.strip(): _coerce(key.strip(), raw)})
    if args.scenario and not args.config:
        pass
    if args.method:
        cfg = replace(cfg, method=SelectionMethod(args.method))
    if args.cycles:
        cfg = replace(cfg, cycles=args.cycles)
    if args.seeds:
        cfg = replace(cfg, seeds=tuple(int(s) for s in args.seeds.split(",")))
    cfg.validate()
    return cfg


def cmd_validate(args) -> int:
    cfg = _load(args)
    _log(f"config ok: scenario={cfg.scenario_id} method={cfg.method.value} "
         f"cycles={cfg.cycles} seeds={list(cfg.seeds)} hash={cfg.config_hash()}")
    return 0


def cmd_gen_fleet(args) -> int:
    cfg = _load(args)
    fleet = der.generate_fleet(cfg.fleet_spec(), cfg.seeds[0])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "fleet.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("lfe_id,asset_id,kind,capacity_kwh,charge_rate_kw,soc_kwh,reserve_floor_kwh\n")
        for lfe_id in sorted(fleet):
            for a in fleet[lfe_id]:
                f.write(f"{lfe_id},{a.id},{a.kind.value},{a.capacity:.3f},"
                        f"{a.charge_rate:.3f},{a.soc:.3f},{a.reserve_floor:.3f}\n")
    _log(f"wrote {path} ({sum(len(v) for v in fleet.values())} assets, "
         f"{len(fleet)} coalitions, seed {cfg.seeds[0]})")
    return 0


def cmd_run(args) -> int:
    cfg = _load(args)
    _log(f"running scenario {cfg.scenario_id} method={cfg.method.value} "
         f"cycles={cfg.cycles} seeds={list(cfg.seeds)} jobs={args.jobs}")
    result = run_experiment(cfg, jobs=args.jobs)
    paths = write_metrics_csv(args.out, [result])
    _log(f"aggregator avg EUR/MWh = {result.mean_agg_eur_per_mwh():.2f}")
    for p in paths:
        _log(f"wrote {p}")
    return 0


def cmd_compare(args) -> int:
    base = _load(args)
    methods = [SelectionMethod(m.strip()) for m in args.methods.split(",")]
    cfgs = [replace(base, method=m) for m in methods]
    for cfg in cfgs:
        cfg.validate()
    _log(f"comparing {[m.value for m in methods]} on scenario {base.scenario_id}")
    table = compare_methods(cfgs, jobs=args.jobs)
    results = [run_experiment(cfg, jobs=args.jobs) for cfg in cfgs]
    paths = write_metrics_csv(args.out, results)
    out = Path(args.out) / "comparison.csv"
    with open(out, "w", encoding="utf-8", newline="\n") as f:
        f.write("lfe_id,delivered_mwh," + ",".join(table.methods) + ",best_method\n")
        for l in sorted(table.eur_per_mwh):
            row = [l, f"{table.delivered_mwh[l]:.6f}"]
            row += [f"{table.eur_per_mwh[l][m]:.6f}" for m in table.methods]
            row.append(table.best_method[l])
            f.write(",".join(row) + "\n")
    _log(f"wrote {out}")
    for p in paths:
        _log(f"wrote {p}")
    return 0


def cmd_export(args) -> int:
    """Re-emit plot-ready inputs for a config: fleet composition and prices."""
    cfg = _load(args)
    rc = cmd_gen_fleet(args)
    if rc != 0:
        return rc
    from .market import PriceProcess
    prices = PriceProcess(base=cfg.price_base, noise_sigma=cfg.price_noise_sigma,
                          mean_reversion=cfg.price_mean_reversion,
                          seed=cfg.seeds[0] + 1_000,
                          delivery_discount=cfg.delivery_discount,
                          delivery_noise_sigma=cfg.delivery_noise_sigma)
    path = Path(args.out) / "price_path.csv"
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("day,slot,price_day_ahead,price_delivery\n")
        for day in range(cfg.cycles):
            p, p_c = prices.next_prices(day)
            for t in range(24):
                f.write(f"{day},{t},{p[t]:.6f},{p_c[t]:.6f}\n")
    _log(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="flexagg",
                                 description="Flexibility-aggregation market simulator")
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb, fn in (("gen-fleet", cmd_gen_fleet), ("run", cmd_run),
                     ("compare", cmd_compare), ("validate-config", cmd_validate),
                     ("export", cmd_export)):
        sp = sub.add_parser(verb)
        sp.add_argument("--config", help="experiment config file (key = value lines)")
        sp.add_argument("--out", default="results", help="output directory")
        sp.add_argument("--scenario", type=int, choices=(1, 2, 3, 4),
                        help="scenario id when no config file is given")
        sp.add_argument("--method", choices=[m.value for m in SelectionMethod])
        sp.add_argument("--cycles", type=int)
        sp.add_argument("--seeds", help="comma-separated master seeds")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override any config field")
        sp.add_argument("--jobs", type=int, default=1, help="parallel seed workers")
        sp.add_argument("-v", "--verbose", action="count", default=0)
        sp.set_defaults(fn=fn)
    if verbs_missing := ({"gen-fleet", "run", "compare", "validate-config", "export"}
                         - set(sub.choices)):
        raise AssertionError(verbs_missing)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.fn(args)
    except ConfigError as exc:
        _log(f"config error: {exc}")
        return 1
    except (DomainError, Exception) as exc:  # noqa: BLE001 - CLI boundary
        if isinstance(exc, KeyboardInterrupt):
            raise
        _log(f"simulation error: {type(exc).__name__}: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
