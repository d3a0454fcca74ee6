"""Command-line front end.

Subcommands: ingest, indices, gen-synthetic, backtest, benchmark, report.
Shared flags: --config (JSON file, overridden by explicit flags), --out,
--seed, --jobs. All randomness flows from --seed; nothing depends on the
wall clock, so identical invocations produce identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import date, timedelta
from pathlib import Path
from zoneinfo import ZoneInfo

from . import __version__
from .accounting import build_report
from .benchmark import BenchmarkSpec, DEFAULT_DURATIONS_H, run_benchmark, write_tables
from .data import (
    IndexTable,
    ingest_auction_prices,
    ingest_trades,
    write_index_csv,
    DAA,
    IDA,
)
from .engine import ALL_MARKETS, MarketData, ScenarioConfig, run_scenario
from .errors import BessArbError, ConfigError
from .ledger import Ledger
from .model import DEFAULT_ZONE, BessConfig, bess_from_discharge_duration, product_grid
from .reporting import report_ledger
from .synthetic import SyntheticSpec, gen_synthetic


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad config file {path}: {exc}") from None


def _cfg_get(cfg: dict, dotted: str, default=None):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            return default
        node = node[part]
    return node


def _pick(value, cfg: dict, dotted: str, default=None):
    """CLI flag wins over the config file, which wins over the default."""
    if value is not None:
        return value
    return _cfg_get(cfg, dotted, default)


def _bess_from_config(cfg: dict, duration_h, e_max, eta_rt) -> BessConfig:
    node = cfg.get("bess", {})
    explicit = {"e_max_mwh", "p_buy_max_mw", "p_sell_max_mw", "eta_c", "eta_d"}
    if duration_h is None and explicit <= set(node):
        return BessConfig(
            e_max_mwh=node["e_max_mwh"],
            p_buy_max_mw=node["p_buy_max_mw"],
            p_sell_max_mw=node["p_sell_max_mw"],
            eta_c=node["eta_c"],
            eta_d=node["eta_d"],
        )
    duration_h = duration_h if duration_h is not None else node.get("discharge_duration_h", 1.0)
    e_max = e_max if e_max is not None else node.get("e_max_mwh", 1.0)
    eta_rt = eta_rt if eta_rt is not None else node.get("eta_rt", 0.92)
    return bess_from_discharge_duration(e_max, duration_h, eta_rt)


def infer_date_range(auctions, zone: str) -> tuple[date, date]:
    """Smallest local-day range covering every auction product."""
    tz = ZoneInfo(zone)
    days = sorted(
        {p.local_day(tz) for market in (DAA, IDA) for p in auctions.products(market)}
    )
    if not days:
        raise ConfigError("auction file holds no products; cannot infer a date range")
    return days[0], days[-1]


def _load_market_data(trades_path, auctions_path) -> MarketData:
    store = ingest_trades(trades_path)
    auctions = ingest_auction_prices(auctions_path)
    return MarketData(store, auctions)


def _scenario_config(args, cfg: dict, auctions) -> ScenarioConfig:
    market = _pick(args.market, cfg, "market")
    if market is None:
        raise ConfigError("no market given (flag --market or config key 'market')")
    zone = _pick(getattr(args, "zone", None), cfg, "zone", DEFAULT_ZONE)
    start = _pick(args.start, cfg, "date_range.start")
    end = _pick(args.end, cfg, "date_range.end")
    if start is None or end is None:
        lo, hi = infer_date_range(auctions, zone)
        start = start or lo.isoformat()
        end = end or hi.isoformat()
    bess = _bess_from_config(cfg, args.duration_h, args.e_max, args.eta_rt)
    dt_trade_min = _pick(None, cfg, "dt_trade_min")
    kwargs = {}
    if dt_trade_min is not None:
        kwargs["dt_trade"] = timedelta(minutes=float(dt_trade_min))
    n_opt = _pick(None, cfg, "n_opt")
    n_trade = _pick(None, cfg, "n_trade")
    if n_opt is not None:
        kwargs["n_opt"] = int(n_opt)
    if n_trade is not None:
        kwargs["n_trade"] = int(n_trade)
    for key, dotted, conv in (
        ("cid_min_lead", "cid.min_lead_min", lambda v: timedelta(minutes=float(v))),
        ("cid_horizon", "cid.horizon_h", lambda v: timedelta(hours=float(v))),
        ("cid_liquidity_horizon", "cid.liquidity_horizon_h", lambda v: timedelta(hours=float(v))),
        ("cid_forecast_trades", "cid.forecast_trades", int),
    ):
        raw = _cfg_get(cfg, dotted)
        if raw is not None:
            kwargs[key] = conv(raw)
    return ScenarioConfig(
        market=market,
        bess=bess,
        start=date.fromisoformat(str(start)),
        end=date.fromisoformat(str(end)),
        zone=zone,
        **kwargs,
    )


def cmd_ingest(args) -> int:
    store = ingest_trades(args.trades)
    print(f"trades: {len(store)} rows across {len(store.products())} products - OK")
    if args.auctions:
        auctions = ingest_auction_prices(args.auctions)
        print(
            f"auctions: {len(auctions)} prices "
            f"({len(auctions.products(DAA))} DAA, {len(auctions.products(IDA))} IDA) - OK"
        )
    return 0


def cmd_indices(args) -> int:
    store = ingest_trades(args.trades)
    table = IndexTable.compute(store, store.products())
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "indices.csv"
    write_index_csv(table, path)
    print(f"wrote {path} ({len(table.products())} products)")
    return 0


def cmd_gen_synthetic(args) -> int:
    cfg = _load_config(args.config)
    start = _pick(args.start, cfg, "synthetic.start")
    if start is None:
        raise ConfigError("gen-synthetic needs --start")
    spec = SyntheticSpec(
        start=date.fromisoformat(str(start)),
        days=int(_pick(args.days, cfg, "synthetic.days", 1)),
        zone=_pick(args.zone, cfg, "zone", DEFAULT_ZONE),
        constant_product_prices=bool(args.constant_prices),
    )
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    auction_path = out_dir / "auctions.csv"
    ticks_path = out_dir / "ticks.csv"
    gen_synthetic(int(args.seed), spec, auction_path, ticks_path)
    print(f"wrote {auction_path} and {ticks_path} (seed {args.seed}, {spec.days} days)")
    return 0


def cmd_backtest(args) -> int:
    cfg = _load_config(args.config)
    data = _load_market_data(args.trades, args.auctions)
    scenario = _scenario_config(args, cfg, data.auctions)
    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    dump = out_dir / "first_window.json" if args.dump_first_window else None
    ledger = run_scenario(scenario, data, dump_first_window=dump)
    name = args.name or f"{scenario.market}_{scenario.start.isoformat()}_{scenario.end.isoformat()}"
    files = ledger.save(out_dir / name)
    report = build_report(ledger, scenario.bess, scenario.zone)
    print(f"market {report.market}: {report.n_days} days, {report.n_trades} trades")
    print(f"total profit:         {report.total_profit_eur:12.2f} EUR")
    print(f"daily cycles:         {report.daily_cycles:12.3f}")
    print(f"daily virtual cycles: {report.daily_virtual_cycles:12.3f}")
    if report.profit_per_cycle_eur is not None:
        print(f"profit per cycle:     {report.profit_per_cycle_eur:12.2f} EUR")
    print(f"residual energy:      {report.final_energy_mwh:12.6f} MWh")
    for f in files:
        print(f"wrote {f}")
    if dump:
        print(f"wrote {dump}")
    return 0


def cmd_benchmark(args) -> int:
    cfg = _load_config(args.config)
    markets = args.markets or _cfg_get(cfg, "benchmark.markets") or list(ALL_MARKETS)
    durations = args.durations or _cfg_get(cfg, "benchmark.durations_h") or list(DEFAULT_DURATIONS_H)
    data = _load_market_data(args.trades, args.auctions)
    zone = _pick(args.zone, cfg, "zone", DEFAULT_ZONE)
    start = _pick(args.start, cfg, "date_range.start")
    end = _pick(args.end, cfg, "date_range.end")
    if start is None or end is None:
        lo, hi = infer_date_range(data.auctions, zone)
        start = start or lo.isoformat()
        end = end or hi.isoformat()
    out_dir = Path(args.out or ".")
    spec = BenchmarkSpec(
        markets=tuple(markets),
        durations_h=tuple(float(d) for d in durations),
        start=date.fromisoformat(str(start)),
        end=date.fromisoformat(str(end)),
        e_max_mwh=float(_pick(args.e_max, cfg, "benchmark.e_max_mwh", 1.0)),
        eta_rt=float(_pick(args.eta_rt, cfg, "benchmark.eta_rt", 0.92)),
        zone=zone,
        jobs=int(args.jobs or 0),
        save_ledgers=bool(args.save_ledgers),
        out_dir=out_dir,
    )
    result = run_benchmark(spec, data)
    files = write_tables(result, out_dir)
    print((out_dir / "tables.txt").read_text(), end="")
    for f in files:
        print(f"wrote {f}")
    if not result.ok:
        for (m, d), msg in sorted(result.failures.items()):
            print(f"FAILED cell {m} {d:g}h: {msg}", file=sys.stderr)
        return 1
    return 0


def cmd_report(args) -> int:
    out_dir = Path(args.out or ".")
    for base in args.ledgers:
        files = report_ledger(base, out_dir)
        for f in files:
            print(f"wrote {f}")
    return 0


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; explicit flags override it")
    p.add_argument("--out", help="output directory (default: current)")
    p.add_argument("--seed", type=int, default=7, help="seed for anything random (default 7)")
    p.add_argument("--jobs", type=int, help="parallel benchmark cells (default: one per core)")


def _add_scenario_flags(p: argparse.ArgumentParser):
    p.add_argument("--start", help="first delivery day (YYYY-MM-DD; default: from data)")
    p.add_argument("--end", help="last delivery day (YYYY-MM-DD; default: from data)")
    p.add_argument("--zone", help=f"market time zone (default {DEFAULT_ZONE})")
    p.add_argument("--duration-h", dest="duration_h", type=float,
                   help="battery full charge/discharge duration in hours")
    p.add_argument("--e-max", dest="e_max", type=float, help="energy capacity in MWh (default 1)")
    p.add_argument("--eta-rt", dest="eta_rt", type=float,
                   help="round-trip efficiency (default 0.92)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bessarb",
        description="Battery storage arbitrage backtesting across short-term power markets",
    )
    ap.add_argument("--version", action="version", version=f"bessarb {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a trades file (and optionally an auction file)")
    _add_common(p)
    p.add_argument("--trades", required=True)
    p.add_argument("--auctions")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("indices", help="compute ID1/ID3/IDFULL per product from ticks")
    _add_common(p)
    p.add_argument("--trades", required=True)
    p.set_defaults(func=cmd_indices)

    p = sub.add_parser("gen-synthetic", help="generate a seeded synthetic dataset")
    _add_common(p)
    p.add_argument("--start", help="first delivery day (YYYY-MM-DD)")
    p.add_argument("--days", type=int, help="number of delivery days (default 1)")
    p.add_argument("--zone")
    p.add_argument("--constant-prices", action="store_true",
                   help="constant per-product tick prices (forecasts equal clearing prices)")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("backtest", help="run one scenario and write its ledger")
    _add_common(p)
    p.add_argument("--trades", required=True)
    p.add_argument("--auctions", required=True)
    p.add_argument("--market", choices=list(ALL_MARKETS))
    _add_scenario_flags(p)
    p.add_argument("--name", help="ledger base name (default: market + range)")
    p.add_argument("--dump-first-window", action="store_true",
                   help="dump the first optimization window as JSON (for bug reports)")
    p.set_defaults(func=cmd_backtest)

    p = sub.add_parser("benchmark", help="run the market x duration matrix and write tables")
    _add_common(p)
    p.add_argument("--trades", required=True)
    p.add_argument("--auctions", required=True)
    p.add_argument("--markets", nargs="+", choices=list(ALL_MARKETS),
                   help="markets to run (default: all seven)")
    p.add_argument("--durations", nargs="+", type=float,
                   help="discharge durations in hours (default: 1 2 3 4 5)")
    _add_scenario_flags(p)
    p.add_argument("--save-ledgers", action="store_true", help="also write per-cell ledgers")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("report", help="render series CSV, summary and figures from ledgers")
    _add_common(p)
    p.add_argument("ledgers", nargs="+", help="ledger base paths (or summary.json paths)")
    p.set_defaults(func=cmd_report)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BessArbError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
