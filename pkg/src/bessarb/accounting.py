"""Profit, cycle and per-day accounting over run ledgers.

Cash convention: a trade's signed volume is buy-positive, so its cash flow
is price * (-signed_volume) * duration. Cycle counts follow the
efficiency-adjusted throughput normalized by twice the energy capacity, so
one full charge plus one full discharge equals one cycle regardless of the
round-trip efficiency. Virtual cycles apply the same formula to every
executed trade instead of the final dispatched schedule, counting churn.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, timedelta
from zoneinfo import ZoneInfo

from .data import DAA, IDA, ID1, ID3, IDFULL
from .errors import ConfigError
from .ledger import Ledger
from .model import BessConfig, DEFAULT_ZONE, ScheduleEntry

_AUCTION_LIKE = (DAA, IDA, IDFULL, ID3, ID1)
_CID = ("CID_F", "CID_PF")


def _cash(trades) -> float:
    return sum(t.price_eur_mwh * -t.signed_volume_mw * t.product.duration_hours for t in trades) + 0.0


def auction_profit(ledger: Ledger) -> float:
    """Total profit of a single-clearing scenario: price * (sell - buy) * duration
    summed over products."""
    if ledger.market and ledger.market not in _AUCTION_LIKE:
        raise ConfigError(f"auction_profit on a {ledger.market} ledger")
    return _cash(ledger.trades)


def cid_profit(ledger: Ledger) -> float:
    """Total profit of a continuous scenario: each executed position change
    settles at its clearing price."""
    if ledger.market and ledger.market not in _CID:
        raise ConfigError(f"cid_profit on a {ledger.market} ledger")
    return _cash(ledger.trades)


def total_profit(ledger: Ledger) -> float:
    return cid_profit(ledger) if ledger.market in _CID else auction_profit(ledger)


def cycles(dispatched, bess: BessConfig) -> float:
    """Equivalent full cycles of a dispatched schedule."""
    tot = 0.0
    for e in dispatched:
        tot += (e.buy_mw * bess.eta_c + e.sell_mw / bess.eta_d) * e.product.duration_hours
    return tot / (2.0 * bess.e_max_mwh)


def virtual_cycles(ledger: Ledger, bess: BessConfig) -> float:
    """Equivalent full cycles of the traded (not dispatched) volumes."""
    tot = 0.0
    for t in ledger.trades:
        v = t.signed_volume_mw
        tot += (max(v, 0.0) * bess.eta_c + max(-v, 0.0) / bess.eta_d) * t.product.duration_hours
    return tot / (2.0 * bess.e_max_mwh)


@dataclass(frozen=True)
class DayRow:
    day: date
    profit_eur: float
    cycles: float
    virtual_cycles: float


@dataclass(frozen=True)
class ScenarioReport:
    """Summary of one scenario run, shaped like the benchmark tables."""

    market: str
    n_days: int
    total_profit_eur: float
    daily_cycles: float
    daily_virtual_cycles: float
    profit_per_cycle_eur: float | None
    per_day: tuple[DayRow, ...]
    final_energy_mwh: float
    n_trades: int
    n_skipped: int

    def to_dict(self) -> dict:
        return {
            "market": self.market,
            "n_days": self.n_days,
            "total_profit_eur": self.total_profit_eur,
            "daily_cycles": self.daily_cycles,
            "daily_virtual_cycles": self.daily_virtual_cycles,
            "profit_per_cycle_eur": self.profit_per_cycle_eur,
            "final_energy_mwh": self.final_energy_mwh,
            "n_trades": self.n_trades,
            "n_skipped": self.n_skipped,
            "per_day": [
                {
                    "day": r.day.isoformat(),
                    "profit_eur": r.profit_eur,
                    "cycles": r.cycles,
                    "virtual_cycles": r.virtual_cycles,
                }
                for r in self.per_day
            ],
        }


def _range_days(ledger: Ledger) -> list[date]:
    rng = ledger.meta.get("date_range")
    if rng:
        start = date.fromisoformat(rng["start"])
        end = date.fromisoformat(rng["end"])
        out = []
        d = start
        while d <= end:
            out.append(d)
            d += timedelta(days=1)
        return out
    days = {e.product.local_day() for e in ledger.dispatched_entries()}
    return sorted(days)


def build_report(ledger: Ledger, bess: BessConfig, zone: str | None = None) -> ScenarioReport:
    """Aggregate a ledger into totals, daily averages and per-day rows.

    Products are attributed to the market-local day of their delivery start;
    daily averages divide by the number of simulated delivery days.
    """
    zone = zone or ledger.meta.get("zone", DEFAULT_ZONE)
    tz = ZoneInfo(zone)
    days = _range_days(ledger)
    if not days:
        raise ConfigError("ledger covers no delivery days")

    profit_by_day: dict[date, float] = {d: 0.0 for d in days}
    cycles_by_day: dict[date, float] = {d: 0.0 for d in days}
    virtual_by_day: dict[date, float] = {d: 0.0 for d in days}

    for t in ledger.trades:
        d = t.product.local_day(tz)
        profit_by_day[d] = profit_by_day.get(d, 0.0) + (
            t.price_eur_mwh * -t.signed_volume_mw * t.product.duration_hours
        )
        v = t.signed_volume_mw
        virtual_by_day[d] = virtual_by_day.get(d, 0.0) + (
            max(v, 0.0) * bess.eta_c + max(-v, 0.0) / bess.eta_d
        ) * t.product.duration_hours / (2.0 * bess.e_max_mwh)
    for e in ledger.dispatched_entries():
        d = e.product.local_day(tz)
        cycles_by_day[d] = cycles_by_day.get(d, 0.0) + (
            e.buy_mw * bess.eta_c + e.sell_mw / bess.eta_d
        ) * e.product.duration_hours / (2.0 * bess.e_max_mwh)

    all_days = sorted(profit_by_day)
    rows = tuple(
        DayRow(d, profit_by_day[d], cycles_by_day.get(d, 0.0), virtual_by_day.get(d, 0.0))
        for d in all_days
    )
    n_days = len(days)
    total = sum(r.profit_eur for r in rows) + 0.0
    daily_cycles = sum(r.cycles for r in rows) / n_days
    daily_virtual = sum(r.virtual_cycles for r in rows) / n_days
    denom = daily_cycles * n_days
    ppc = total / denom if denom > 0 else None
    return ScenarioReport(
        market=ledger.market,
        n_days=n_days,
        total_profit_eur=total,
        daily_cycles=daily_cycles,
        daily_virtual_cycles=daily_virtual,
        profit_per_cycle_eur=ppc,
        per_day=rows,
        final_energy_mwh=ledger.final_energy_mwh,
        n_trades=len(ledger.trades),
        n_skipped=len(ledger.skipped),
    )


def profit_per_cycle(total_profit_eur: float, daily_cycles: float, n_days: int) -> float:
    """The benchmark-table ratio: total profit over total cycles."""
    return total_profit_eur / (daily_cycles * n_days)
