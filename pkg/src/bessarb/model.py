"""Core domain types: products, battery configuration, schedules, positions.

All timestamps are stored as aware UTC datetimes; market-local wall time
only appears at ingestion and reporting boundaries. Products are identified
by (delivery_start, duration) so joins across data sources stay unambiguous.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from zoneinfo import ZoneInfo

from .errors import ConfigError, EngineError

UTC = timezone.utc
DEFAULT_ZONE = "Europe/Berlin"

QUARTER_HOURLY = 15
HOURLY = 60
VALID_DURATIONS = (QUARTER_HOURLY, HOURLY)

_EPOCH = datetime(1970, 1, 1, tzinfo=UTC)


def to_utc(dt: datetime) -> datetime:
    """Normalize an aware datetime to UTC. Naive datetimes are rejected."""
    if dt.tzinfo is None:
        raise ValueError(f"naive datetime not allowed: {dt!r}")
    return dt.astimezone(UTC)


def epoch_us(dt: datetime) -> int:
    """Microseconds since the Unix epoch, computed in exact integer arithmetic."""
    d = to_utc(dt) - _EPOCH
    return (d.days * 86_400 + d.seconds) * 1_000_000 + d.microseconds


def from_epoch_us(us: int) -> datetime:
    return _EPOCH + timedelta(microseconds=us)


@dataclass(frozen=True, order=True, slots=True)
class Product:
    """A deliverable power slot: the atomic trading unit.

    `delivery_start` is normalized to UTC; `duration_min` is 15 or 60.
    Ordering is by (delivery_start, duration_min).
    """

    delivery_start: datetime
    duration_min: int

    def __post_init__(self):
        start = to_utc(self.delivery_start)
        object.__setattr__(self, "delivery_start", start)
        if self.duration_min not in VALID_DURATIONS:
            raise ConfigError(
                f"product duration must be one of {VALID_DURATIONS}, got {self.duration_min}"
            )
        if start.second or start.microsecond or start.minute % self.duration_min:
            raise ConfigError(
                f"delivery start {start.isoformat()} not aligned to "
                f"{self.duration_min}-minute grid"
            )

    @property
    def delivery_end(self) -> datetime:
        return self.delivery_start + timedelta(minutes=self.duration_min)

    @property
    def duration_hours(self) -> float:
        return self.duration_min / 60.0

    @property
    def start_us(self) -> int:
        return epoch_us(self.delivery_start)

    def local_day(self, zone: str | ZoneInfo = DEFAULT_ZONE) -> date:
        """Delivery day in market-local time (day attribution for reports)."""
        tz = ZoneInfo(zone) if isinstance(zone, str) else zone
        return self.delivery_start.astimezone(tz).date()

    def __str__(self):
        return f"{self.delivery_start.isoformat()}/{self.duration_min}min"


def product_grid(day: date, zone: str | ZoneInfo, duration_min: int) -> list[Product]:
    """All products of one duration whose delivery lies within the local day.

    The walk is done in absolute time between the two local midnights, so DST
    days come out right by construction (92/96/100 quarter-hours, 23/24/25
    hours).
    """
    if duration_min not in VALID_DURATIONS:
        raise ConfigError(f"invalid product duration {duration_min}")
    tz = ZoneInfo(zone) if isinstance(zone, str) else zone
    start = datetime.combine(day, time(0), tzinfo=tz).astimezone(UTC)
    end = datetime.combine(day + timedelta(days=1), time(0), tzinfo=tz).astimezone(UTC)
    step = timedelta(minutes=duration_min)
    out = []
    t = start
    while t < end:
        out.append(Product(t, duration_min))
        t += step
    return out


@dataclass(frozen=True, slots=True)
class BessConfig:
    """Battery energy storage parameters.

    Efficiencies are fractions in (0, 1]; the round trip efficiency is their
    product.
    """

    e_max_mwh: float
    p_buy_max_mw: float
    p_sell_max_mw: float
    eta_c: float
    eta_d: float

    def __post_init__(self):
        if not self.e_max_mwh > 0:
            raise ConfigError(f"e_max_mwh must be positive, got {self.e_max_mwh}")
        if not (self.p_buy_max_mw > 0 and self.p_sell_max_mw > 0):
            raise ConfigError("power limits must be positive")
        for name, eta in (("eta_c", self.eta_c), ("eta_d", self.eta_d)):
            if not 0 < eta <= 1:
                raise ConfigError(f"{name} must be in (0, 1], got {eta}")

    @property
    def eta_rt(self) -> float:
        return self.eta_c * self.eta_d


def bess_from_discharge_duration(
    e_max_mwh: float, delta_hours: float, eta_rt: float
) -> BessConfig:
    """Symmetric-power battery sized by its full charge/discharge duration.

    Power is e_max / delta_hours on both sides; charge and discharge
    efficiencies are equal, so each is sqrt(eta_rt).
    """
    if not delta_hours > 0:
        raise ConfigError(f"discharge duration must be positive, got {delta_hours}")
    if not 0 < eta_rt <= 1:
        raise ConfigError(f"round-trip efficiency must be in (0, 1], got {eta_rt}")
    if not e_max_mwh > 0:
        raise ConfigError(f"e_max_mwh must be positive, got {e_max_mwh}")
    eta = math.sqrt(eta_rt)
    p = e_max_mwh / delta_hours
    return BessConfig(e_max_mwh=e_max_mwh, p_buy_max_mw=p, p_sell_max_mw=p, eta_c=eta, eta_d=eta)


@dataclass(frozen=True, slots=True)
class ScheduleEntry:
    """Committed charge/discharge of one product plus the energy level after it.

    Buying and selling are mutually exclusive within a product.
    """

    product: Product
    buy_mw: float
    sell_mw: float
    energy_end_mwh: float

    def __post_init__(self):
        if self.buy_mw < 0 or self.sell_mw < 0:
            raise ConfigError(
                f"negative power in schedule entry for {self.product}: "
                f"buy={self.buy_mw}, sell={self.sell_mw}"
            )
        if min(self.buy_mw, self.sell_mw) != 0.0:
            raise ConfigError(
                f"simultaneous charge and discharge for {self.product}: "
                f"buy={self.buy_mw}, sell={self.sell_mw}"
            )

    @property
    def net_mw(self) -> float:
        """Signed position, buy-positive."""
        return self.buy_mw - self.sell_mw


def energy_delta_mwh(buy_mw: float, sell_mw: float, duration_hours: float, bess: BessConfig) -> float:
    """Stored-energy change of one product interval, efficiency adjusted."""
    return (buy_mw * bess.eta_c - sell_mw / bess.eta_d) * duration_hours


def net_energy_delta_mwh(net_mw: float, duration_hours: float, bess: BessConfig) -> float:
    if net_mw >= 0:
        return net_mw * bess.eta_c * duration_hours
    return net_mw / bess.eta_d * duration_hours


OPEN = "open"
FROZEN = "frozen"


class PositionBook:
    """Per-product committed net positions over trading time.

    Each product carries a strictly time-increasing snapshot sequence of
    (trading_time, net_buy_mw) and an open/frozen status. Once frozen, a
    product's position can never change again.
    """

    def __init__(self):
        self._snaps: dict[Product, list[tuple[datetime, float]]] = {}
        self._frozen: dict[Product, datetime] = {}

    def record(self, product: Product, t: datetime, net_mw: float) -> None:
        if product in self._frozen:
            raise EngineError(
                f"position change for frozen product {product} at {t.isoformat()}"
            )
        t = to_utc(t)
        snaps = self._snaps.setdefault(product, [])
        if snaps and t <= snaps[-1][0]:
            raise EngineError(
                f"non-increasing snapshot time for {product}: {t.isoformat()}"
            )
        snaps.append((t, net_mw))

    def freeze(self, product: Product, t: datetime) -> None:
        if product in self._frozen:
            raise EngineError(f"{product} already frozen")
        self._frozen[product] = to_utc(t)

    def status(self, product: Product) -> str:
        return FROZEN if product in self._frozen else OPEN

    def freeze_time(self, product: Product) -> datetime | None:
        return self._frozen.get(product)

    def net_position(self, product: Product, t: datetime | None = None) -> float:
        """Latest committed net position at or before t (0 if never traded)."""
        snaps = self._snaps.get(product, [])
        if t is None:
            return snaps[-1][1] if snaps else 0.0
        t = to_utc(t)
        pos = 0.0
        for st, v in snaps:
            if st > t:
                break
            pos = v
        return pos

    def snapshots(self, product: Product) -> list[tuple[datetime, float]]:
        return list(self._snaps.get(product, []))

    def products(self) -> list[Product]:
        keys = set(self._snaps) | set(self._frozen)
        return sorted(keys)
