"""Seeded synthetic market data at desk scale.

Produces an auction file (hourly DAA plus quarter-hourly IDA prices for
every product in range) and a tick file whose per-product transaction flow
reproduces the continuous market's liquidity profile: sparse trading far
from delivery, Poisson arrivals whose intensity ramps up as lead time
shrinks, and a guaranteed four anchor trades inside the final hour so
last-trades forecasting is always exercisable. Near-delivery arrivals
cluster in the first minute after each five-minute mark, mimicking the
round-time activity clustering of continuous markets (and giving the
one-minute clearing-price windows realistic hit rates at desk-scale tick
counts). Tick prices follow a mean-reverting walk around the product's IDA
price with volatility growing toward delivery.

Everything is driven by one numpy Generator; a fixed seed yields
byte-identical files.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date, timedelta
from zoneinfo import ZoneInfo

import numpy as np

from .errors import ConfigError
from .model import DEFAULT_ZONE, Product, from_epoch_us, product_grid

_MIN_US = 60_000_000
_ANCHOR_OFFSETS_MIN = (55, 40, 25, 10)  # before delivery, within the last hour
_NEAR_FIRST_MIN = 80   # near regime: 5-minute blocks from 80 down to 10 min of lead
_NEAR_LAST_MIN = 10
_FAR_FIRST_MIN = 360   # far regime: uniform sparse arrivals in [s-6h, s-80min)


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic market."""

    start: date
    days: int
    zone: str = DEFAULT_ZONE
    base_level: float = 70.0      # EUR/MWh around which the daily shape swings
    daily_swing: float = 45.0
    day_walk_sigma: float = 12.0  # innovation of the mean-reverting day offset
    daa_sigma: float = 7.0        # hourly auction noise
    ida_sigma: float = 6.0        # quarter-hour spread around the hour
    tick_sigma: float = 3.0       # tick walk innovation scale (far from delivery)
    ticks_far: float = 4.0        # mean Poisson arrivals in the far regime
    near_rate_lo: float = 0.8     # per-block Poisson mean at 80 min of lead ...
    near_rate_hi: float = 1.9     # ... ramping to this just before the close
    volume_lo: float = 0.1
    volume_hi: float = 1.0
    constant_product_prices: bool = False

    def __post_init__(self):
        if self.days < 1:
            raise ConfigError("synthetic date range must cover at least one day")
        if not 0 < self.volume_lo <= self.volume_hi:
            raise ConfigError("bad volume range")
        if self.near_rate_lo < 0 or self.near_rate_hi < self.near_rate_lo:
            raise ConfigError("bad near-regime arrival rates")


def _hour_shape(local_hour_frac: float) -> float:
    """Double-peaked daily curve (morning and evening peaks, night trough)."""
    h = local_hour_frac
    return 0.55 * math.sin(2 * math.pi * (h - 15.5) / 24.0) + 0.45 * math.sin(
        4 * math.pi * (h - 2.5) / 24.0
    )


def gen_synthetic(seed: int, spec: SyntheticSpec, auction_path, ticks_path):
    """Write the auction and tick files; returns (auction_path, ticks_path)."""
    rng = np.random.default_rng(seed)
    tz = ZoneInfo(spec.zone)

    auction_rows_daa = []
    auction_rows_ida = []
    tick_rows = []  # (exec_us, seq, product, price, volume)
    seq = 0
    day_offset = 0.0

    day = spec.start
    for _ in range(spec.days):
        # mean-reverting day level: multi-day price regimes without the
        # unbounded drift of a plain random walk
        day_offset = 0.85 * day_offset + float(rng.normal(0.0, spec.day_walk_sigma))
        hours = product_grid(day, tz, 60)
        quarters = product_grid(day, tz, 15)

        daa_by_hour_us = {}
        for hp in hours:
            local = hp.delivery_start.astimezone(tz)
            shape = _hour_shape(local.hour + local.minute / 60.0)
            price = (
                spec.base_level
                + day_offset
                + spec.daily_swing * shape
                + float(rng.normal(0.0, spec.daa_sigma))
            )
            price = round(price, 2)
            daa_by_hour_us[hp.start_us] = price
            auction_rows_daa.append((hp, price))

        for qp in quarters:
            hour_us = qp.start_us - (qp.start_us % 3_600_000_000)
            daa = daa_by_hour_us[hour_us]
            ida = round(daa + float(rng.normal(0.0, spec.ida_sigma)), 2)
            auction_rows_ida.append((qp, ida))

            s_us = qp.start_us
            # anchors sit 30 s past a five-minute mark so a clearing window
            # opened at the mark catches them
            anchor_us = [s_us - m * _MIN_US + 30_000_000 for m in _ANCHOR_OFFSETS_MIN]
            n_far = int(rng.poisson(spec.ticks_far))
            far_span = (_FAR_FIRST_MIN - _NEAR_FIRST_MIN) * 60  # seconds
            far_us = (
                s_us
                - _FAR_FIRST_MIN * _MIN_US
                + rng.integers(0, far_span, n_far) * 1_000_000
            )
            near_list = []
            for lead_min in range(_NEAR_FIRST_MIN, _NEAR_LAST_MIN - 1, -5):
                frac = (_NEAR_FIRST_MIN - lead_min) / (_NEAR_FIRST_MIN - _NEAR_LAST_MIN)
                rate = spec.near_rate_lo + (spec.near_rate_hi - spec.near_rate_lo) * frac
                k = int(rng.poisson(rate))
                if k:
                    block = s_us - lead_min * _MIN_US
                    near_list.append(block + rng.integers(1, 60, k) * 1_000_000)
            near_us = (
                np.concatenate(near_list) if near_list else np.empty(0, dtype=np.int64)
            )
            times = np.concatenate(
                [np.asarray(anchor_us, dtype=np.int64), far_us, near_us]
            ).astype(np.int64)
            times.sort()

            volumes = rng.uniform(spec.volume_lo, spec.volume_hi, len(times))
            innovations = rng.normal(0.0, 1.0, len(times))
            if spec.constant_product_prices:
                prices = [ida] * len(times)
            else:
                prices = []
                y = 0.0
                prev_us = None
                for t_us, eps in zip(times, innovations):
                    lead_h = (s_us - int(t_us)) / 3_600_000_000
                    sigma = spec.tick_sigma * (1.0 + 2.0 * max(0.0, 1.0 - lead_h / 3.0))
                    if prev_us is not None:
                        phi = math.exp(-(int(t_us) - prev_us) / (45.0 * 60e6))
                        y = phi * y + sigma * eps
                    else:
                        y = sigma * eps
                    prev_us = int(t_us)
                    prices.append(round(ida + y, 2))

            for t_us, price, vol in zip(times, prices, volumes):
                tick_rows.append((int(t_us), seq, qp, price, round(float(vol), 3)))
                seq += 1

        day += timedelta(days=1)

    def _iso_local(dt):
        return dt.astimezone(tz).isoformat()

    with open(auction_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["market", "delivery_start", "duration_min", "price_eur_mwh"])
        for p, price in auction_rows_daa:
            w.writerow(["DAA", _iso_local(p.delivery_start), 60, f"{price:.2f}"])
        for p, price in auction_rows_ida:
            w.writerow(["IDA", _iso_local(p.delivery_start), 15, f"{price:.2f}"])

    tick_rows.sort(key=lambda r: (r[0], r[1]))
    with open(ticks_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["delivery_start", "duration_min", "exec_time", "price_eur_mwh", "volume_mw"])
        for t_us, _, p, price, vol in tick_rows:
            w.writerow(
                [
                    _iso_local(p.delivery_start),
                    15,
                    _iso_local(from_epoch_us(t_us)),
                    f"{price:.2f}",
                    f"{vol:.3f}",
                ]
            )

    return auction_path, ticks_path
