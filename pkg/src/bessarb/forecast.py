"""Price forecasts for the trading strategy.

Continuous-market products use a dual regime: beyond the liquidity horizon
(default 5 h of lead time) the forecast defaults to the product's IDA
clearing price; inside it, the unweighted mean of the most recent trades
(default last four, fewer if fewer exist) executed at or before the
decision time. Auction-like markets and intraday indices are perfect
foresight by construction: the forecast is the actual value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta

import numpy as np

from .data import AuctionPrices, IndexTable, TradeStore, DAA, IDA, INDEX_KINDS
from .errors import DataGapError
from .model import Product, epoch_us

DEFAULT_LIQUIDITY_HORIZON = timedelta(hours=5)
DEFAULT_FORECAST_TRADES = 4


@dataclass
class ForecastContext:
    """Data needed by the continuous-market forecast, plus its parameters."""

    store: TradeStore
    auctions: AuctionPrices
    liquidity_horizon: timedelta = DEFAULT_LIQUIDITY_HORIZON
    forecast_trades: int = DEFAULT_FORECAST_TRADES
    _mean_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.liquidity_horizon <= timedelta(0):
            raise ValueError("liquidity horizon must be positive")
        if self.forecast_trades < 1:
            raise ValueError("forecast trade count must be at least 1")

    def recent_mean_table(self, product: Product):
        """(times_us, means) where means[k] is the unweighted mean of the
        last min(k, forecast_trades) trade prices after k trades."""
        cached = self._mean_cache.get(product)
        if cached is not None:
            return cached
        pt = self.store.ticks(product)
        if pt is None:
            out = (np.empty(0, dtype=np.int64), np.array([np.nan]))
        else:
            w = self.forecast_trades
            cum = pt.price_cum
            k = np.arange(len(pt.prices) + 1)
            lo = np.maximum(k - w, 0)
            counts = k - lo
            means = np.full(len(k), np.nan)
            nz = counts > 0
            means[nz] = (cum[k[nz]] - cum[lo[nz]]) / counts[nz]
            out = (pt.times_us, means)
        self._mean_cache[product] = out
        return out


def cid_forecast(ctx: ForecastContext, product: Product, t: datetime) -> float:
    """Forecast the continuous-market price of `product` as seen at time `t`.

    Lead times strictly greater than the liquidity horizon return the IDA
    price; otherwise the mean of the most recent trades at or before `t`,
    falling back to the IDA price when no trade exists yet.
    """
    lead = product.delivery_start - t
    if lead > ctx.liquidity_horizon:
        return ctx.auctions.require(IDA, product)
    times_us, means = ctx.recent_mean_table(product)
    k = int(np.searchsorted(times_us, epoch_us(t), side="right"))
    if k == 0:
        return ctx.auctions.require(IDA, product)
    return float(means[k])


def auction_forecast(
    auctions: AuctionPrices, market: str, product: Product, indices: IndexTable | None = None
) -> float:
    """Perfect-foresight forecast: returns the actual price or index value."""
    if market in (DAA, IDA):
        return auctions.require(market, product)
    if market in INDEX_KINDS:
        if indices is None:
            raise DataGapError(f"no index table supplied for {market}")
        return indices.require(market, product)
    raise DataGapError(f"unknown market {market!r}")
