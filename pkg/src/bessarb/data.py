"""Market data: tick ingestion, auction prices, clearing prices and indices.

File formats (UTF-8 CSV with a header row; timestamps ISO-8601 with a
numeric UTC offset):

  trades:   delivery_start,duration_min,exec_time,price_eur_mwh,volume_mw
  auctions: market,delivery_start,duration_min,price_eur_mwh   (market DAA|IDA)
  indices:  delivery_start,duration_min,id1,idfull,id3         (blank = absent)
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .errors import DataGapError, ParseError, ValidationError
from .model import Product, epoch_us, from_epoch_us, to_utc

DAA = "DAA"
IDA = "IDA"
AUCTION_MARKETS = (DAA, IDA)

ID1 = "ID1"
ID3 = "ID3"
IDFULL = "IDFULL"
INDEX_KINDS = (ID1, ID3, IDFULL)

_MINUTE_US = 60_000_000
_HOUR_US = 3_600_000_000


@dataclass(frozen=True, slots=True)
class Trade:
    """One executed continuous-market transaction."""

    product: Product
    exec_time: datetime
    price: float
    volume: float

    def __post_init__(self):
        object.__setattr__(self, "exec_time", to_utc(self.exec_time))
        if not self.volume > 0:
            raise ValidationError(f"trade volume must be positive, got {self.volume}")
        if self.exec_time >= self.product.delivery_start:
            raise ValidationError(
                f"trade at {self.exec_time.isoformat()} not before delivery "
                f"start of {self.product}"
            )


class _ProductTicks:
    """Time-sorted tick arrays of one product, with prefix sums for O(log n)
    window means."""

    __slots__ = ("times_us", "prices", "volumes", "price_cum", "pv_cum", "vol_cum")

    def __init__(self, times_us, prices, volumes):
        self.times_us = times_us
        self.prices = prices
        self.volumes = volumes
        self.price_cum = np.concatenate([[0.0], np.cumsum(prices)])
        self.pv_cum = np.concatenate([[0.0], np.cumsum(prices * volumes)])
        self.vol_cum = np.concatenate([[0.0], np.cumsum(volumes)])

    def __eq__(self, other):
        return (
            isinstance(other, _ProductTicks)
            and np.array_equal(self.times_us, other.times_us)
            and np.array_equal(self.prices, other.prices)
            and np.array_equal(self.volumes, other.volumes)
        )


class TradeStore:
    """Immutable per-product, time-sorted collection of executed trades.

    Ties in execution time keep their ingestion order (stable sort).
    """

    def __init__(self, trades: list[Trade]):
        buckets: dict[Product, list[Trade]] = {}
        for t in trades:
            buckets.setdefault(t.product, []).append(t)
        self._ticks: dict[Product, _ProductTicks] = {}
        self._counts: dict[Product, int] = {}
        for product in sorted(buckets):
            rows = buckets[product]
            times = np.array([epoch_us(t.exec_time) for t in rows], dtype=np.int64)
            order = np.argsort(times, kind="stable")
            self._ticks[product] = _ProductTicks(
                times[order],
                np.array([rows[i].price for i in order]),
                np.array([rows[i].volume for i in order]),
            )
            self._counts[product] = len(rows)
        self._n = len(trades)

    def __len__(self):
        return self._n

    def __eq__(self, other):
        return (
            isinstance(other, TradeStore)
            and self._counts == other._counts
            and all(self._ticks[p] == other._ticks[p] for p in self._ticks)
        )

    def products(self) -> list[Product]:
        return list(self._ticks)

    def n_trades(self, product: Product) -> int:
        return self._counts.get(product, 0)

    def ticks(self, product: Product) -> _ProductTicks | None:
        return self._ticks.get(product)

    def trades(self, product: Product) -> list[Trade]:
        pt = self._ticks.get(product)
        if pt is None:
            return []
        return [
            Trade(product, from_epoch_us(int(t)), float(p), float(v))
            for t, p, v in zip(pt.times_us, pt.prices, pt.volumes)
        ]


def _parse_timestamp(raw: str, path, line) -> datetime:
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError:
        raise ParseError(f"bad timestamp {raw!r}", path, line) from None
    if dt.tzinfo is None:
        raise ParseError(f"timestamp {raw!r} lacks a UTC offset", path, line)
    return dt


def _parse_float(raw: str, what: str, path, line) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"bad {what} {raw!r}", path, line) from None


def _parse_product(start_raw: str, dur_raw: str, path, line) -> Product:
    start = _parse_timestamp(start_raw, path, line)
    try:
        dur = int(dur_raw)
    except ValueError:
        raise ParseError(f"bad duration {dur_raw!r}", path, line) from None
    try:
        return Product(start, dur)
    except Exception as exc:
        raise ValidationError(str(exc), path, line) from None


TRADES_HEADER = ["delivery_start", "duration_min", "exec_time", "price_eur_mwh", "volume_mw"]
AUCTION_HEADER = ["market", "delivery_start", "duration_min", "price_eur_mwh"]
INDEX_HEADER = ["delivery_start", "duration_min", "id1", "idfull", "id3"]


def _open_rows(path, expected_header):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", path, 1) from None
        if [h.strip() for h in header] != expected_header:
            raise ParseError(
                f"unexpected header {header!r}, want {expected_header}", path, 1
            )
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            yield line, row


def ingest_trades(path) -> TradeStore:
    """Parse, validate and sort a trades file. Rejects bad rows with their
    line number; retains tie order for equal execution times."""
    trades = []
    for line, row in _open_rows(path, TRADES_HEADER):
        if len(row) != len(TRADES_HEADER):
            raise ParseError(f"expected {len(TRADES_HEADER)} fields, got {len(row)}", path, line)
        product = _parse_product(row[0], row[1], path, line)
        exec_time = _parse_timestamp(row[2], path, line)
        price = _parse_float(row[3], "price", path, line)
        volume = _parse_float(row[4], "volume", path, line)
        try:
            trades.append(Trade(product, exec_time, price, volume))
        except ValidationError as exc:
            raise ValidationError(str(exc), path, line) from None
    return TradeStore(trades)


class AuctionPrices:
    """Single clearing price per (market, product); DAA hourly, IDA quarter-hourly."""

    def __init__(self, entries: dict[tuple[str, Product], float] | None = None):
        self._prices: dict[tuple[str, Product], float] = dict(entries or {})

    @staticmethod
    def _check(market: str, product: Product):
        if market not in AUCTION_MARKETS:
            raise ValidationError(f"unknown auction market {market!r}")
        want = 60 if market == DAA else 15
        if product.duration_min != want:
            raise ValidationError(
                f"{market} products are {want}-minute, got {product.duration_min} for {product}"
            )

    def add(self, market: str, product: Product, price: float):
        self._check(market, product)
        key = (market, product)
        if key in self._prices:
            raise ValidationError(f"duplicate auction price for {market} {product}")
        self._prices[key] = price

    def get(self, market: str, product: Product) -> float | None:
        return self._prices.get((market, product))

    def require(self, market: str, product: Product) -> float:
        price = self.get(market, product)
        if price is None:
            raise DataGapError(f"no {market} price for {product}")
        return price

    def products(self, market: str) -> list[Product]:
        return sorted(p for m, p in self._prices if m == market)

    def __len__(self):
        return len(self._prices)

    def __eq__(self, other):
        return isinstance(other, AuctionPrices) and self._prices == other._prices


def ingest_auction_prices(path) -> AuctionPrices:
    prices = AuctionPrices()
    for line, row in _open_rows(path, AUCTION_HEADER):
        if len(row) != len(AUCTION_HEADER):
            raise ParseError(f"expected {len(AUCTION_HEADER)} fields, got {len(row)}", path, line)
        market = row[0].strip()
        product = _parse_product(row[1], row[2], path, line)
        price = _parse_float(row[3], "price", path, line)
        try:
            prices.add(market, product, price)
        except ValidationError as exc:
            raise ValidationError(str(exc), path, line) from None
    return prices


def clearing_price(store: TradeStore, product: Product, t: datetime) -> float | None:
    """Unweighted mean price of the product's trades in (t, t+1min].

    Returns None when no trade falls in the window; absence is a value,
    not an error.
    """
    pt = store.ticks(product)
    if pt is None:
        return None
    t_us = epoch_us(t)
    i = int(np.searchsorted(pt.times_us, t_us, side="right"))
    j = int(np.searchsorted(pt.times_us, t_us + _MINUTE_US, side="right"))
    if j <= i:
        return None
    return float((pt.price_cum[j] - pt.price_cum[i]) / (j - i))


def index_price(store: TradeStore, product: Product, kind: str) -> float | None:
    """Volume-weighted average price over the last 1 h / 3 h / full session
    before delivery start."""
    if kind not in INDEX_KINDS:
        raise ValidationError(f"unknown index kind {kind!r}")
    pt = store.ticks(product)
    if pt is None:
        return None
    s_us = product.start_us
    j = int(np.searchsorted(pt.times_us, s_us, side="left"))
    if kind == IDFULL:
        i = 0
    else:
        w = _HOUR_US if kind == ID1 else 3 * _HOUR_US
        i = int(np.searchsorted(pt.times_us, s_us - w, side="left"))
    if j <= i:
        return None
    vol = pt.vol_cum[j] - pt.vol_cum[i]
    if vol <= 0:
        return None
    return float((pt.pv_cum[j] - pt.pv_cum[i]) / vol)


class IndexTable:
    """Per-product ID1/ID3/IDFULL values (None where undefined)."""

    def __init__(self, values: dict[Product, dict[str, float | None]]):
        self._values = values

    @classmethod
    def compute(cls, store: TradeStore, products) -> "IndexTable":
        values = {}
        for p in products:
            values[p] = {k: index_price(store, p, k) for k in INDEX_KINDS}
        return cls(values)

    def get(self, kind: str, product: Product) -> float | None:
        if kind not in INDEX_KINDS:
            raise ValidationError(f"unknown index kind {kind!r}")
        row = self._values.get(product)
        return None if row is None else row[kind]

    def require(self, kind: str, product: Product) -> float:
        v = self.get(kind, product)
        if v is None:
            raise DataGapError(f"no {kind} index for {product}")
        return v

    def products(self) -> list[Product]:
        return sorted(self._values)


def write_index_csv(table: IndexTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(INDEX_HEADER)
        for p in table.products():
            row = [p.delivery_start.isoformat(), p.duration_min]
            for kind in (ID1, IDFULL, ID3):
                v = table.get(kind, p)
                row.append("" if v is None else repr(v))
            w.writerow(row)
