"""Ledger reports: per-interval series as CSV plus rendered figures.

The series CSV carries one row per dispatched product with the signed
power (buy minus sell), the stored energy at interval end, and the cash
profit of the interval's trades; suitable for external plotting. Two
figures are rendered next to it: the power/energy schedule and the
per-interval profit against average execution prices.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from zoneinfo import ZoneInfo

import matplotlib

matplotlib.use("Agg")

import matplotlib.dates as mdates
import matplotlib.pyplot as plt

from .ledger import Ledger
from .model import DEFAULT_ZONE


@dataclass(frozen=True)
class IntervalRow:
    interval_start: str  # ISO, market-local offset
    duration_min: int
    power_mw: float      # buy-positive
    energy_mwh: float
    profit_eur: float
    avg_price_eur_mwh: float | None
    start_dt: object


def build_interval_series(ledger: Ledger, zone: str | None = None) -> list[IntervalRow]:
    zone = zone or ledger.meta.get("zone", DEFAULT_ZONE)
    tz = ZoneInfo(zone)
    cash: dict = {}
    volume: dict = {}
    pricevol: dict = {}
    for t in ledger.trades:
        p = t.product
        cash[p] = cash.get(p, 0.0) + t.price_eur_mwh * -t.signed_volume_mw * p.duration_hours
        volume[p] = volume.get(p, 0.0) + abs(t.signed_volume_mw)
        pricevol[p] = pricevol.get(p, 0.0) + t.price_eur_mwh * abs(t.signed_volume_mw)
    rows = []
    for e in ledger.dispatched_entries():
        p = e.product
        vol = volume.get(p, 0.0)
        rows.append(
            IntervalRow(
                interval_start=p.delivery_start.astimezone(tz).isoformat(),
                duration_min=p.duration_min,
                power_mw=e.buy_mw - e.sell_mw,
                energy_mwh=e.energy_end_mwh,
                profit_eur=cash.get(p, 0.0),
                avg_price_eur_mwh=(pricevol[p] / vol) if vol > 0 else None,
                start_dt=p.delivery_start.astimezone(tz),
            )
        )
    return rows


def write_series_csv(rows: list[IntervalRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["interval", "power_mw", "energy_mwh", "profit_eur"])
        for r in rows:
            w.writerow([r.interval_start, repr(r.power_mw), repr(r.energy_mwh), repr(r.profit_eur)])


def write_summary_text(ledger: Ledger, report, path) -> None:
    lines = [
        f"market:              {ledger.market}",
        f"delivery days:       {report.n_days}",
        f"trades executed:     {report.n_trades}",
        f"total profit:        {report.total_profit_eur:.2f} EUR",
        f"daily cycles:        {report.daily_cycles:.3f}",
        f"daily virtual cycles:{report.daily_virtual_cycles:.3f}",
        "profit per cycle:    "
        + (f"{report.profit_per_cycle_eur:.2f} EUR" if report.profit_per_cycle_eur is not None else "n/a"),
        f"residual energy:     {report.final_energy_mwh:.6f} MWh",
    ]
    if ledger.skipped:
        lines.append("")
        lines.append(f"skipped changes ({len(ledger.skipped)}):")
        for s in ledger.skipped[:200]:
            lines.append(
                f"  {s.exec_time.isoformat()}  {s.product.delivery_start.isoformat()}"
                f"/{s.product.duration_min}min  intended {s.intended_change_mw:+.4f} MW"
            )
        if len(ledger.skipped) > 200:
            lines.append(f"  ... {len(ledger.skipped) - 200} more")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def render_schedule_figure(rows: list[IntervalRow], path, title: str = "") -> None:
    """Signed power steps with the stored-energy trajectory overlaid."""
    fig, ax = plt.subplots(figsize=(11, 4.0))
    xs = [r.start_dt for r in rows]
    power = [r.power_mw for r in rows]
    energy = [r.energy_mwh for r in rows]
    ax.step(xs, power, where="post", color="tab:blue", lw=0.9, label="power (MW, buy +)")
    ax.axhline(0.0, color="0.7", lw=0.6)
    ax.set_ylabel("power [MW]")
    ax2 = ax.twinx()
    ax2.step(xs, energy, where="post", color="tab:orange", lw=0.9, label="energy (MWh)")
    ax2.set_ylabel("stored energy [MWh]")
    ax.xaxis.set_major_formatter(mdates.DateFormatter("%m-%d %H:%M"))
    fig.autofmt_xdate()
    h1, l1 = ax.get_legend_handles_labels()
    h2, l2 = ax2.get_legend_handles_labels()
    ax.legend(h1 + h2, l1 + l2, loc="upper left", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_profit_figure(rows: list[IntervalRow], path, title: str = "") -> None:
    """Per-interval profit bars with average execution prices."""
    fig, ax = plt.subplots(figsize=(11, 4.0))
    xs = [r.start_dt for r in rows]
    profits = [r.profit_eur for r in rows]
    colors = ["tab:green" if p >= 0 else "tab:red" for p in profits]
    width = (rows[0].duration_min / (24 * 60.0)) * 0.9 if rows else 0.01
    ax.bar(xs, profits, width=width, align="edge", color=colors, label="profit (EUR)")
    ax.set_ylabel("profit [EUR]")
    ax.axhline(0.0, color="0.7", lw=0.6)
    priced = [(r.start_dt, r.avg_price_eur_mwh) for r in rows if r.avg_price_eur_mwh is not None]
    if priced:
        ax2 = ax.twinx()
        ax2.plot([x for x, _ in priced], [p for _, p in priced],
                 color="tab:purple", lw=0.9, label="avg trade price (EUR/MWh)")
        ax2.set_ylabel("price [EUR/MWh]")
    ax.xaxis.set_major_formatter(mdates.DateFormatter("%m-%d %H:%M"))
    fig.autofmt_xdate()
    ax.legend(loc="upper left", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def report_ledger(base, out_dir) -> list[Path]:
    """Full report of one exported ledger: series CSV, summary, figures."""
    from .accounting import build_report
    from .model import BessConfig

    ledger = Ledger.load(base)
    meta_bess = ledger.meta.get("bess", {})
    bess = BessConfig(
        e_max_mwh=meta_bess.get("e_max_mwh", 1.0),
        p_buy_max_mw=meta_bess.get("p_buy_max_mw", 1.0),
        p_sell_max_mw=meta_bess.get("p_sell_max_mw", 1.0),
        eta_c=meta_bess.get("eta_c", 1.0),
        eta_d=meta_bess.get("eta_d", 1.0),
    )
    report = build_report(ledger, bess)
    rows = build_interval_series(ledger)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    name = Path(base).name
    series = out_dir / f"{name}.series.csv"
    summary = out_dir / f"{name}.summary.txt"
    fig1 = out_dir / f"{name}.schedule.png"
    fig2 = out_dir / f"{name}.profit.png"
    write_series_csv(rows, series)
    write_summary_text(ledger, report, summary)
    title = f"{ledger.market}  {ledger.meta.get('date_range', {}).get('start', '')}"
    render_schedule_figure(rows, fig1, title)
    render_profit_figure(rows, fig2, title)
    return [series, summary, fig1, fig2]
