"""Rolling-window trading engine.

Auction-like markets (DAA, IDA and the ID1/ID3/IDFULL indices) run once per
delivery day on the day before, trade every next-day product at its actual
price, and optimize with one extra look-ahead day. The continuous markets
(CID_F with the dual-regime forecast, CID_PF with realized clearing prices
as forecasts) re-optimize on a short cadence, trade only the nearest
products, execute position changes at the realized clearing price and
freeze each product when its lead time falls below the minimum.

Stored energy persists across windows and days; a run starts empty.
Position changes without a clearing price are deferred (never forced): the
window is re-solved with those products pinned to their committed position
so the executed mixture always chains feasibly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import date, datetime, time, timedelta
from zoneinfo import ZoneInfo

import numpy as np

from . import optimizer
from .data import (
    AuctionPrices,
    IndexTable,
    TradeStore,
    clearing_price,
    DAA,
    IDA,
    ID1,
    ID3,
    IDFULL,
    INDEX_KINDS,
)
from .errors import ConfigError, DataGapError, EngineError
from .forecast import ForecastContext, auction_forecast
from .ledger import Ledger, LedgerTrade, SkippedChange
from .model import (
    BessConfig,
    DEFAULT_ZONE,
    PositionBook,
    Product,
    ScheduleEntry,
    epoch_us,
    from_epoch_us,
    net_energy_delta_mwh,
    product_grid,
    to_utc,
)

CID_F = "CID_F"
CID_PF = "CID_PF"
AUCTION_LIKE = (DAA, IDA, IDFULL, ID3, ID1)
CID_MARKETS = (CID_F, CID_PF)
ALL_MARKETS = AUCTION_LIKE + CID_MARKETS

# nominal local clearing times of the day-ahead and intraday auctions
_AUCTION_HOUR = {DAA: 12, IDA: 15, IDFULL: 15, ID3: 15, ID1: 15}

_US = 1_000_000
_EXEC_TOL_MW = 1e-9


@dataclass(frozen=True)
class ScenarioConfig:
    """One backtest scenario: a market, a battery, and the loop parameters.

    Unset loop parameters are resolved to the market's defaults: auction-like
    markets trade the whole next day once daily (24/96 products, optimizing
    48/192 two days ahead); continuous markets re-optimize every five
    minutes over the 32 nearest quarter-hours, trading the closest three
    with at least 35 minutes of lead time.
    """

    market: str
    bess: BessConfig
    start: date
    end: date
    zone: str = DEFAULT_ZONE
    t0: datetime | None = None
    dt_trade: timedelta | None = None
    n_opt: int | None = None
    n_trade: int | None = None
    cid_min_lead: timedelta = timedelta(minutes=35)
    cid_horizon: timedelta = timedelta(hours=8)
    cid_liquidity_horizon: timedelta = timedelta(hours=5)
    cid_forecast_trades: int = 4

    def __post_init__(self):
        if self.market not in ALL_MARKETS:
            raise ConfigError(f"unknown market {self.market!r}, want one of {ALL_MARKETS}")
        if self.end < self.start:
            raise ConfigError(f"empty date range {self.start}..{self.end}")
        tz = ZoneInfo(self.zone)
        is_cid = self.market in CID_MARKETS
        if self.dt_trade is None:
            object.__setattr__(
                self, "dt_trade", timedelta(minutes=5) if is_cid else timedelta(hours=24)
            )
        if self.n_opt is None:
            object.__setattr__(self, "n_opt", 32 if is_cid else (48 if self.market == DAA else 192))
        if self.n_trade is None:
            object.__setattr__(self, "n_trade", 3 if is_cid else (24 if self.market == DAA else 96))
        if self.t0 is None:
            if is_cid:
                first = datetime.combine(self.start, time(0), tzinfo=tz)
                object.__setattr__(
                    self, "t0", (first - self.cid_horizon - self.cid_min_lead).astimezone(ZoneInfo("UTC"))
                )
            else:
                prev = datetime.combine(
                    self.start - timedelta(days=1), time(_AUCTION_HOUR[self.market]), tzinfo=tz
                )
                object.__setattr__(self, "t0", to_utc(prev))
        else:
            object.__setattr__(self, "t0", to_utc(self.t0))
        if self.dt_trade <= timedelta(0):
            raise ConfigError("dt_trade must be positive")
        if self.n_trade > self.n_opt:
            raise ConfigError(
                f"n_trade ({self.n_trade}) must not exceed n_opt ({self.n_opt})"
            )
        if self.n_trade < 1:
            raise ConfigError("n_trade must be at least 1")
        for name in ("cid_min_lead", "cid_horizon", "cid_liquidity_horizon"):
            if getattr(self, name) <= timedelta(0):
                raise ConfigError(f"{name} must be positive")
        if self.cid_forecast_trades < 1:
            raise ConfigError("cid_forecast_trades must be at least 1")

    @property
    def days(self) -> list[date]:
        out = []
        d = self.start
        while d <= self.end:
            out.append(d)
            d += timedelta(days=1)
        return out

    def meta(self) -> dict:
        return {
            "market": self.market,
            "bess": {
                "e_max_mwh": self.bess.e_max_mwh,
                "p_buy_max_mw": self.bess.p_buy_max_mw,
                "p_sell_max_mw": self.bess.p_sell_max_mw,
                "eta_c": self.bess.eta_c,
                "eta_d": self.bess.eta_d,
            },
            "date_range": {"start": self.start.isoformat(), "end": self.end.isoformat()},
            "zone": self.zone,
            "t0": self.t0.isoformat(),
            "dt_trade_s": self.dt_trade.total_seconds(),
            "n_opt": self.n_opt,
            "n_trade": self.n_trade,
            "cid": {
                "min_lead_min": self.cid_min_lead.total_seconds() / 60.0,
                "horizon_h": self.cid_horizon.total_seconds() / 3600.0,
                "liquidity_horizon_h": self.cid_liquidity_horizon.total_seconds() / 3600.0,
                "forecast_trades": self.cid_forecast_trades,
            },
        }


@dataclass
class MarketData:
    """Shared, read-only inputs of one or more scenario runs."""

    store: TradeStore
    auctions: AuctionPrices
    indices: IndexTable | None = None

    def ensure_indices(self, products) -> IndexTable:
        if self.indices is None:
            self.indices = IndexTable.compute(self.store, products)
        return self.indices


@dataclass(frozen=True)
class ProductSelection:
    """Products picked at one loop instant; trade is always a subset of opt."""

    trade: tuple[Product, ...]
    opt: tuple[Product, ...]
    truncated: bool

    def __post_init__(self):
        assert set(self.trade) <= set(self.opt)


def select_sets(cfg: ScenarioConfig, t: datetime, grid) -> ProductSelection:
    """Pick the tradeable and optimized product sets at loop instant `t`.

    `grid` is the scenario's product universe, sorted. Auction-like markets
    take every next-day product and one extra look-ahead day for the
    optimization set; continuous markets take the earliest products past the
    minimum lead time, within the optimization horizon.
    """
    t = to_utc(t)
    grid = list(grid)
    if cfg.market in CID_MARKETS:
        gate = t + cfg.cid_min_lead
        limit = gate + cfg.cid_horizon
        eligible = [p for p in grid if gate < p.delivery_start < limit]
        opt = tuple(eligible[: cfg.n_opt])
        trade = opt[: cfg.n_trade]
        return ProductSelection(trade, opt, truncated=len(trade) < cfg.n_trade)
    tz = ZoneInfo(cfg.zone)
    day = t.astimezone(tz).date() + timedelta(days=1)
    trade = tuple(p for p in grid if p.local_day(tz) == day)
    lookahead = tuple(p for p in grid if p.local_day(tz) == day + timedelta(days=1))
    return ProductSelection(
        trade, trade + lookahead, truncated=len(trade) + len(lookahead) < cfg.n_opt
    )


def _quarter_universe(cfg: ScenarioConfig) -> list[Product]:
    out = []
    for day in cfg.days:
        out.extend(product_grid(day, cfg.zone, 15))
    return out


def _auction_universe(cfg: ScenarioConfig, data: MarketData) -> list[Product]:
    """Products the scenario may trade or look ahead to, with their price or
    index present. Missing prices inside the range are a data gap for
    DAA/IDA; index products without an index are silently excluded."""
    dur = 60 if cfg.market == DAA else 15
    products: list[Product] = []
    indices = None
    if cfg.market in INDEX_KINDS:
        lookahead = product_grid(cfg.end + timedelta(days=1), cfg.zone, 15)
        indices = data.ensure_indices(_quarter_universe(cfg) + lookahead)
    for i, day in enumerate([*cfg.days, cfg.end + timedelta(days=1)]):
        lookahead_only = i == len(cfg.days)
        for p in product_grid(day, cfg.zone, dur):
            if cfg.market in (DAA, IDA):
                price = data.auctions.get(cfg.market, p)
                if price is None:
                    if lookahead_only:
                        continue
                    raise DataGapError(f"no {cfg.market} price for {p}")
                products.append(p)
            elif indices.get(cfg.market, p) is not None:
                products.append(p)
    return products


def run_scenario(cfg: ScenarioConfig, data: MarketData, dump_first_window=None) -> Ledger:
    """Execute one scenario and return its ledger."""
    if cfg.market in CID_MARKETS:
        return _run_cid(cfg, data, dump_first_window)
    return _run_auction(cfg, data, dump_first_window)


def _run_auction(cfg: ScenarioConfig, data: MarketData, dump_first_window=None) -> Ledger:
    universe = _auction_universe(cfg, data)
    indices = data.indices  # populated by _auction_universe for index markets
    tz = ZoneInfo(cfg.zone)
    book = PositionBook()
    ledger = Ledger(meta=cfg.meta(), positions=book)

    e_state = 0.0
    dumped = False
    for day in cfg.days:
        t = to_utc(datetime.combine(day - timedelta(days=1), time(_AUCTION_HOUR[cfg.market]), tzinfo=tz))
        sel = select_sets(cfg, t, universe)
        if not sel.trade:
            continue
        prices = tuple(auction_forecast(data.auctions, cfg.market, p, indices) for p in sel.opt)
        prob = optimizer.WindowProblem(sel.opt, prices, cfg.bess, e_state)
        sol = optimizer.solve_window(prob, optimizer.AUCTION)
        if sol.status != "optimal":
            raise EngineError(f"auction window at {t.isoformat()} came back {sol.status}")
        if dump_first_window and not dumped:
            with open(dump_first_window, "w", encoding="utf-8") as fh:
                fh.write(optimizer.debug_dump(prob, sol))
            dumped = True
        for k, p in enumerate(sel.trade):
            entry = sol.schedule[k]
            ledger.dispatched[p] = entry
            if abs(entry.net_mw) > _EXEC_TOL_MW:
                ledger.trades.append(LedgerTrade(t, p, entry.net_mw, prices[k], cfg.market))
                book.record(p, t, entry.net_mw)
            book.freeze(p, t)
        e_state = sol.schedule[len(sel.trade) - 1].energy_end_mwh
    ledger.final_energy_mwh = e_state
    return ledger


class _CidWindowSolver:
    """Hot-path window solver with per-size cached chain matrices."""

    def __init__(self, bess: BessConfig, duration_hours: float):
        self.bess = bess
        self.dt_h = duration_hours
        self._cache: dict[int, tuple] = {}

    def _arrays(self, n: int):
        got = self._cache.get(n)
        if got is None:
            deltas = np.full(n, self.dt_h)
            A = optimizer._chain_matrix(deltas, self.bess.eta_c, self.bess.eta_d)
            lb = np.zeros(n)
            ub_b = np.full(n, self.bess.p_buy_max_mw)
            ub_s = np.full(n, self.bess.p_sell_max_mw)
            got = (deltas, A, lb, ub_b, ub_s)
            self._cache[n] = got
        return got

    def solve(self, prices: np.ndarray, e0: float) -> np.ndarray:
        """Optimal net position (buy-positive MW) per product."""
        n = len(prices)
        deltas, A, lb, ub_b, ub_s = self._arrays(n)
        if not -optimizer.E0_TOL <= e0 <= self.bess.e_max_mwh + optimizer.E0_TOL:
            raise EngineError(f"stored energy {e0} out of range; should be unreachable")
        e0 = min(max(e0, 0.0), self.bess.e_max_mwh)
        feasible, b, s, _ = optimizer._solve_milp_arrays(
            A, deltas, prices, lb, ub_b, lb, ub_s, e0, self.bess.e_max_mwh
        )
        if not feasible:
            raise EngineError(
                f"continuous window infeasible (e0={e0}); this should be unreachable"
            )
        net = b - s
        net[np.abs(net) < 1e-11] = 0.0
        return net

    def chain_feasible(self, e0: float, nets) -> bool:
        """Whether a committed-position mixture keeps stored energy in range."""
        e = e0
        lo, hi = -1e-9, self.bess.e_max_mwh + 1e-9
        for net in nets:
            if net >= 0.0:
                e += net * self.bess.eta_c * self.dt_h
            else:
                e += net / self.bess.eta_d * self.dt_h
            if e < lo or e > hi:
                return False
        return True


def _run_cid(cfg: ScenarioConfig, data: MarketData, dump_first_window=None) -> Ledger:
    products = _quarter_universe(cfg)
    n = len(products)
    start_us = np.array([p.start_us for p in products], dtype=np.int64)
    ctx = ForecastContext(
        data.store,
        data.auctions,
        liquidity_horizon=cfg.cid_liquidity_horizon,
        forecast_trades=cfg.cid_forecast_trades,
    )
    ida = np.array(
        [np.nan if (v := data.auctions.get(IDA, p)) is None else v for p in products]
    )
    tick_times: list[list | None] = [None] * n
    tick_price_cum: list[np.ndarray | None] = [None] * n
    mean_tables: list[np.ndarray | None] = [None] * n
    n_ticks = [0] * n
    for i, p in enumerate(products):
        pt = data.store.ticks(p)
        if pt is not None:
            tick_times[i] = pt.times_us.tolist()
            tick_price_cum[i] = pt.price_cum
            mean_tables[i] = ctx.recent_mean_table(p)[1]
            n_ticks[i] = len(pt.times_us)
    # the loop instant only moves forward, so per-product tick positions are
    # tracked with monotone pointers instead of repeated binary searches
    ptr_at = [0] * n       # ticks executed at or before t
    ptr_at_min = [0] * n   # ticks executed at or before t + 1 min

    perfect = cfg.market == CID_PF
    solver = _CidWindowSolver(cfg.bess, 0.25)
    book = PositionBook()
    ledger = Ledger(meta=cfg.meta(), positions=book)
    committed = np.zeros(n)

    t0_us = epoch_us(cfg.t0)
    dt_us = int(cfg.dt_trade.total_seconds()) * _US
    gate_off_us = int(cfg.cid_min_lead.total_seconds()) * _US
    horizon_us = int(cfg.cid_horizon.total_seconds()) * _US
    liq_us = int(cfg.cid_liquidity_horizon.total_seconds()) * _US
    minute_us = 60 * _US

    def _advance_at(i: int, t_us: int) -> int:
        times = tick_times[i]
        k = ptr_at[i]
        stop = n_ticks[i]
        while k < stop and times[k] <= t_us:
            k += 1
        ptr_at[i] = k
        return k

    def _clearing(i: int, t_us: int) -> float | None:
        if tick_times[i] is None:
            return None
        a = _advance_at(i, t_us)
        times = tick_times[i]
        b = ptr_at_min[i]
        if b < a:
            b = a
        stop = n_ticks[i]
        limit = t_us + minute_us
        while b < stop and times[b] <= limit:
            b += 1
        ptr_at_min[i] = b
        if b <= a:
            return None
        cum = tick_price_cum[i]
        return float((cum[b] - cum[a]) / (b - a))

    def _forecast(i: int, t_us: int) -> float:
        if start_us[i] - t_us > liq_us:
            v = ida[i]
        else:
            k = 0 if tick_times[i] is None else _advance_at(i, t_us)
            if k > 0:
                return float(mean_tables[i][k])
            v = ida[i]
        if np.isnan(v):
            raise DataGapError(f"no IDA price for {products[i]} (needed as forecast)")
        return float(v)

    fidx = 0
    e_state = 0.0
    t_us = t0_us
    cache_key = None
    cache_fc = None
    cache_plan = None
    dumped = False

    while fidx < n:
        gate_us = t_us + gate_off_us
        while fidx < n and start_us[fidx] <= gate_us:
            freeze_t = from_epoch_us(max(t_us - dt_us, t0_us))
            book.freeze(products[fidx], freeze_t)
            e_state += net_energy_delta_mwh(committed[fidx], 0.25, cfg.bess)
            fidx += 1
        if fidx >= n:
            break
        hi = int(np.searchsorted(start_us, gate_us + horizon_us, side="left"))
        count = min(cfg.n_opt, hi - fidx)
        if count <= 0:
            t_us += dt_us
            continue
        n_trade = min(cfg.n_trade, count)

        fc = np.empty(count)
        for k in range(count):
            fc[k] = _forecast(fidx + k, t_us)
        if perfect:
            for k in range(count):
                cp = _clearing(fidx + k, t_us)
                if cp is not None:
                    fc[k] = cp

        key = (fidx, count, e_state)
        if key == cache_key and np.array_equal(fc, cache_fc):
            plan = cache_plan
        else:
            plan = solver.solve(fc, e_state)
            cache_key, cache_fc, cache_plan = key, fc, plan

        if dump_first_window and not dumped:
            _dump_cid_window(cfg, products, fidx, count, fc, committed, e_state, dump_first_window)
            dumped = True

        # Execution at realized clearing prices, nearest products only. A
        # change without a clearing price is deferred. When some change is
        # deferred, the remaining ones are only applied if the committed
        # mixture still chains feasibly (full plans always do; partial
        # execution may not, so the executable subset is grown greedily in
        # delivery order under an exact feasibility walk).
        t_dt = from_epoch_us(t_us)
        executable = []  # (k, clearing price)
        gap = False
        for k in range(n_trade):
            i = fidx + k
            if abs(plan[k] - committed[i]) <= _EXEC_TOL_MW:
                continue
            cp = _clearing(i, t_us)
            if cp is None:
                gap = True
                ledger.skipped.append(
                    SkippedChange(t_dt, products[i], float(plan[k] - committed[i]))
                )
            else:
                executable.append((k, cp))
        if executable and gap:
            candidate = committed[fidx : fidx + count].copy()
            for k, _ in executable:
                candidate[k] = plan[k]
            if not solver.chain_feasible(e_state, candidate):
                accepted = []
                candidate = committed[fidx : fidx + count].copy()
                for k, cp in executable:
                    prev = candidate[k]
                    candidate[k] = plan[k]
                    if solver.chain_feasible(e_state, candidate):
                        accepted.append((k, cp))
                    else:
                        candidate[k] = prev
                        ledger.skipped.append(
                            SkippedChange(
                                t_dt, products[fidx + k], float(plan[k] - committed[fidx + k])
                            )
                        )
                executable = accepted
        for k, cp in executable:
            i = fidx + k
            change = float(plan[k] - committed[i])
            ledger.trades.append(LedgerTrade(t_dt, products[i], change, cp, cfg.market))
            committed[i] = float(plan[k])
            book.record(products[i], t_dt, committed[i])

        t_us += dt_us

    # dispatched schedule: rechain the committed positions from empty storage
    e = 0.0
    for i, p in enumerate(products):
        net = float(committed[i])
        e += net_energy_delta_mwh(net, 0.25, cfg.bess)
        ledger.dispatched[p] = ScheduleEntry(p, max(net, 0.0), max(-net, 0.0), e)
    ledger.final_energy_mwh = e
    return ledger


def _dump_cid_window(cfg, products, fidx, count, fc, committed, e_state, path):
    prob = optimizer.WindowProblem(
        tuple(products[fidx : fidx + count]),
        tuple(float(v) for v in fc),
        cfg.bess,
        e_state,
        tuple(float(committed[fidx + k]) for k in range(count)),
    )
    sol = optimizer.solve_window(prob, optimizer.CID)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(optimizer.debug_dump(prob, sol))
