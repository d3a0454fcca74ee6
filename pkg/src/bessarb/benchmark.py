"""Cross-market x battery-duration benchmark matrix.

Runs every requested (market, discharge-duration) cell over one shared
dataset and emits three tables in the benchmark layout (markets as rows,
durations as columns): total profit, average daily cycles with extra
virtual-cycle rows for the continuous scenarios, and profit per cycle.
Cells run independently; a failed cell is marked in the tables and flips
the benchmark to failed without stopping the rest.
"""

from __future__ import annotations

import csv
import os
import traceback
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

from .accounting import ScenarioReport, build_report
from .engine import ALL_MARKETS, CID_MARKETS, MarketData, ScenarioConfig, run_scenario
from .errors import ConfigError
from .model import DEFAULT_ZONE, bess_from_discharge_duration

DEFAULT_DURATIONS_H = (1.0, 2.0, 3.0, 4.0, 5.0)


@dataclass(frozen=True)
class BenchmarkSpec:
    markets: tuple[str, ...]
    durations_h: tuple[float, ...]
    start: date
    end: date
    e_max_mwh: float = 1.0
    eta_rt: float = 0.92
    zone: str = DEFAULT_ZONE
    jobs: int = 0  # 0 = one per core
    save_ledgers: bool = False
    out_dir: Path | None = None

    def __post_init__(self):
        if not self.markets:
            raise ConfigError("benchmark needs at least one market")
        if not self.durations_h:
            raise ConfigError("benchmark needs at least one discharge duration")
        for m in self.markets:
            if m not in ALL_MARKETS:
                raise ConfigError(f"unknown market {m!r}")
        for d in self.durations_h:
            if d <= 0:
                raise ConfigError(f"bad discharge duration {d}")


@dataclass
class BenchmarkResult:
    spec: BenchmarkSpec
    reports: dict = field(default_factory=dict)   # (market, duration) -> ScenarioReport
    failures: dict = field(default_factory=dict)  # (market, duration) -> message

    @property
    def ok(self) -> bool:
        return not self.failures


def _cell_config(spec: BenchmarkSpec, market: str, duration_h: float) -> ScenarioConfig:
    bess = bess_from_discharge_duration(spec.e_max_mwh, duration_h, spec.eta_rt)
    return ScenarioConfig(market=market, bess=bess, start=spec.start, end=spec.end, zone=spec.zone)


def _run_cell(spec: BenchmarkSpec, data: MarketData, market: str, duration_h: float):
    cfg = _cell_config(spec, market, duration_h)
    ledger = run_scenario(cfg, data)
    report = build_report(ledger, cfg.bess, cfg.zone)
    if spec.save_ledgers and spec.out_dir is not None:
        ledger.save(Path(spec.out_dir) / "ledgers" / f"{market}_{duration_h:g}h")
    return report


# set before forking so worker processes inherit the loaded data
_WORKER: dict = {}


def _run_cell_worker(args):
    market, duration_h = args
    spec = _WORKER["spec"]
    data = _WORKER["data"]
    try:
        return (market, duration_h, _run_cell(spec, data, market, duration_h), None)
    except Exception as exc:  # cell isolation: report, don't crash the matrix
        return (market, duration_h, None, f"{type(exc).__name__}: {exc}")


def run_benchmark(spec: BenchmarkSpec, data: MarketData) -> BenchmarkResult:
    # Index tables are shared state computed on demand; precompute before
    # forking so every cell sees the same object.
    if any(m not in ("DAA", "IDA") + CID_MARKETS for m in spec.markets):
        from .engine import _auction_universe

        _auction_universe(_cell_config(spec, "ID1", spec.durations_h[0]), data)

    cells = [(m, d) for m in spec.markets for d in spec.durations_h]
    result = BenchmarkResult(spec)
    jobs = spec.jobs if spec.jobs > 0 else (os.cpu_count() or 1)
    jobs = min(jobs, len(cells))

    if jobs <= 1:
        for market, duration_h in cells:
            try:
                result.reports[(market, duration_h)] = _run_cell(spec, data, market, duration_h)
            except Exception as exc:
                result.failures[(market, duration_h)] = f"{type(exc).__name__}: {exc}"
                traceback.print_exc()
    else:
        import multiprocessing as mp

        _WORKER["spec"] = spec
        _WORKER["data"] = data
        ctx = mp.get_context("fork")
        with ctx.Pool(processes=jobs) as pool:
            for market, duration_h, report, err in pool.map(_run_cell_worker, cells):
                if err is None:
                    result.reports[(market, duration_h)] = report
                else:
                    result.failures[(market, duration_h)] = err
        _WORKER.clear()
    return result


def _fmt_cell(value, fmt):
    if value is None:
        return "n/a"
    return format(value, fmt)


def _table_rows(result: BenchmarkResult, metric: str):
    spec = result.spec
    rows = []
    markets = list(spec.markets)
    if metric == "cycles":
        markets += [m + "_virtual" for m in spec.markets if m in CID_MARKETS]
    for m in markets:
        base = m[: -len("_virtual")] if m.endswith("_virtual") else m
        row = [m]
        for d in spec.durations_h:
            key = (base, d)
            if key in result.failures:
                row.append("FAILED")
                continue
            rep: ScenarioReport | None = result.reports.get(key)
            if rep is None:
                row.append("FAILED")
            elif metric == "profit":
                row.append(f"{rep.total_profit_eur:.2f}")
            elif metric == "cycles":
                v = rep.daily_virtual_cycles if m.endswith("_virtual") else rep.daily_cycles
                row.append(f"{v:.3f}")
            else:
                row.append(_fmt_cell(rep.profit_per_cycle_eur, ".2f"))
        rows.append(row)
    return rows


def _duration_labels(spec: BenchmarkSpec):
    return [f"{d:g}h" for d in spec.durations_h]


def write_tables(result: BenchmarkResult, out_dir) -> list[Path]:
    """profits.csv, cycles.csv, profit_per_cycle.csv plus aligned text."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = ["market"] + _duration_labels(result.spec)
    written = []
    text_blocks = []
    for metric, fname, title in (
        ("profit", "profits.csv", "Total profit (EUR)"),
        ("cycles", "cycles.csv", "Average daily cycles (virtual rows count traded volume)"),
        ("ppc", "profit_per_cycle.csv", "Profit per cycle (EUR)"),
    ):
        rows = _table_rows(result, metric)
        path = out_dir / fname
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        written.append(path)
        text_blocks.append(_aligned(title, header, rows))
    text = "\n\n".join(text_blocks) + "\n"
    text_path = out_dir / "tables.txt"
    text_path.write_text(text, encoding="utf-8")
    written.append(text_path)
    return written


def _aligned(title, header, rows) -> str:
    cols = [header] + rows
    widths = [max(len(str(r[i])) for r in cols) for i in range(len(header))]
    lines = [title]
    lines.append("  ".join(str(h).ljust(widths[i]) for i, h in enumerate(header)))
    for r in rows:
        lines.append(
            "  ".join(
                str(v).ljust(widths[i]) if i == 0 else str(v).rjust(widths[i])
                for i, v in enumerate(r)
            )
        )
    return "\n".join(lines)
