"""Run ledgers: executed trades, dispatched schedules, skipped changes.

A ledger is exported as three files sharing a base path:

  <base>.trades.ndjson   one JSON record per executed trade
  <base>.trades.csv      trades in the ingest schema plus signed_volume_mw
  <base>.summary.json    config echo, dispatched schedule, skipped changes,
                         freeze times, final stored energy

Exports are deterministic byte-for-byte for identical runs.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .errors import ParseError
from .model import BessConfig, PositionBook, Product, ScheduleEntry, to_utc


@dataclass(frozen=True, slots=True)
class LedgerTrade:
    exec_time: datetime
    product: Product
    signed_volume_mw: float  # buy-positive
    price_eur_mwh: float
    market: str

    def __post_init__(self):
        object.__setattr__(self, "exec_time", to_utc(self.exec_time))


@dataclass(frozen=True, slots=True)
class SkippedChange:
    """An intended position change deferred for lack of a clearing price."""

    exec_time: datetime
    product: Product
    intended_change_mw: float


@dataclass
class Ledger:
    """Complete record of one scenario run."""

    meta: dict
    trades: list[LedgerTrade] = field(default_factory=list)
    dispatched: dict[Product, ScheduleEntry] = field(default_factory=dict)
    skipped: list[SkippedChange] = field(default_factory=list)
    final_energy_mwh: float = 0.0
    positions: PositionBook | None = None

    @property
    def market(self) -> str:
        return self.meta.get("market", "")

    def net_traded(self, product: Product) -> float:
        return sum(t.signed_volume_mw for t in self.trades if t.product == product)

    def save(self, base) -> list[Path]:
        base = Path(base)
        base.parent.mkdir(parents=True, exist_ok=True)
        ndjson = base.with_name(base.name + ".trades.ndjson")
        trades_csv = base.with_name(base.name + ".trades.csv")
        summary = base.with_name(base.name + ".summary.json")

        with open(ndjson, "w", encoding="utf-8") as fh:
            for t in self.trades:
                fh.write(
                    json.dumps(
                        {
                            "exec_time": t.exec_time.isoformat(),
                            "delivery_start": t.product.delivery_start.isoformat(),
                            "duration_min": t.product.duration_min,
                            "signed_volume_mw": t.signed_volume_mw,
                            "price_eur_mwh": t.price_eur_mwh,
                            "market": t.market,
                        },
                        sort_keys=True,
                    )
                )
                fh.write("\n")

        with open(trades_csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["delivery_start", "duration_min", "exec_time", "price_eur_mwh",
                 "volume_mw", "signed_volume_mw"]
            )
            for t in self.trades:
                w.writerow(
                    [
                        t.product.delivery_start.isoformat(),
                        t.product.duration_min,
                        t.exec_time.isoformat(),
                        repr(t.price_eur_mwh),
                        repr(abs(t.signed_volume_mw)),
                        repr(t.signed_volume_mw),
                    ]
                )

        freezes = []
        if self.positions is not None:
            for p in self.positions.products():
                ft = self.positions.freeze_time(p)
                if ft is not None:
                    freezes.append(
                        {
                            "delivery_start": p.delivery_start.isoformat(),
                            "duration_min": p.duration_min,
                            "freeze_time": ft.isoformat(),
                        }
                    )
        doc = {
            "meta": self.meta,
            "dispatched": [
                {
                    "delivery_start": e.product.delivery_start.isoformat(),
                    "duration_min": e.product.duration_min,
                    "buy_mw": e.buy_mw,
                    "sell_mw": e.sell_mw,
                    "energy_end_mwh": e.energy_end_mwh,
                }
                for e in self.dispatched_entries()
            ],
            "skipped": [
                {
                    "exec_time": s.exec_time.isoformat(),
                    "delivery_start": s.product.delivery_start.isoformat(),
                    "duration_min": s.product.duration_min,
                    "intended_change_mw": s.intended_change_mw,
                }
                for s in self.skipped
            ],
            "final_energy_mwh": self.final_energy_mwh,
            "freezes": freezes,
            "n_trades": len(self.trades),
        }
        with open(summary, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return [ndjson, trades_csv, summary]

    def dispatched_entries(self) -> list[ScheduleEntry]:
        return [self.dispatched[p] for p in sorted(self.dispatched)]

    @classmethod
    def load(cls, base) -> "Ledger":
        """Rebuild a ledger from its exported files (positions are not
        round-tripped)."""
        base = Path(base)
        if base.name.endswith(".summary.json"):
            base = base.with_name(base.name[: -len(".summary.json")])
        summary = base.with_name(base.name + ".summary.json")
        ndjson = base.with_name(base.name + ".trades.ndjson")
        try:
            with open(summary, encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ParseError("summary file not found", summary) from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"corrupt summary: {exc}", summary) from None

        trades = []
        market = doc.get("meta", {}).get("market", "")
        try:
            with open(ndjson, encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        rec = json.loads(line)
                        trades.append(
                            LedgerTrade(
                                datetime.fromisoformat(rec["exec_time"]),
                                Product(
                                    datetime.fromisoformat(rec["delivery_start"]),
                                    int(rec["duration_min"]),
                                ),
                                float(rec["signed_volume_mw"]),
                                float(rec["price_eur_mwh"]),
                                rec.get("market", market),
                            )
                        )
                    except (KeyError, ValueError, json.JSONDecodeError) as exc:
                        raise ParseError(f"corrupt trade record: {exc}", ndjson, line_no) from None
        except FileNotFoundError:
            raise ParseError("trades file not found", ndjson) from None

        dispatched = {}
        for rec in doc.get("dispatched", []):
            p = Product(datetime.fromisoformat(rec["delivery_start"]), int(rec["duration_min"]))
            dispatched[p] = ScheduleEntry(
                p, float(rec["buy_mw"]), float(rec["sell_mw"]), float(rec["energy_end_mwh"])
            )
        skipped = [
            SkippedChange(
                datetime.fromisoformat(rec["exec_time"]),
                Product(datetime.fromisoformat(rec["delivery_start"]), int(rec["duration_min"])),
                float(rec["intended_change_mw"]),
            )
            for rec in doc.get("skipped", [])
        ]
        return cls(
            meta=doc.get("meta", {}),
            trades=trades,
            dispatched=dispatched,
            skipped=skipped,
            final_energy_mwh=float(doc.get("final_energy_mwh", 0.0)),
            positions=None,
        )


def dispatch_residuals(ledger: Ledger, bess: BessConfig) -> tuple[float, float]:
    """Worst energy-balance residual and worst bound violation of the
    dispatched schedule, rechained from empty storage."""
    e = 0.0
    worst_bal = 0.0
    worst_bound = 0.0
    for entry in ledger.dispatched_entries():
        d = (entry.buy_mw * bess.eta_c - entry.sell_mw / bess.eta_d) * entry.product.duration_hours
        e += d
        worst_bal = max(worst_bal, abs(entry.energy_end_mwh - e))
        worst_bound = max(worst_bound, -e, e - bess.e_max_mwh)
        e = entry.energy_end_mwh
    return worst_bal, max(worst_bound, 0.0)
