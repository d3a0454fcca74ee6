"""Battery storage arbitrage backtesting across short-term power markets."""

__version__ = "0.1.0"

from .model import (
    BessConfig,
    PositionBook,
    Product,
    ScheduleEntry,
    bess_from_discharge_duration,
    product_grid,
)
from .data import (
    AuctionPrices,
    IndexTable,
    Trade,
    TradeStore,
    clearing_price,
    index_price,
    ingest_auction_prices,
    ingest_trades,
)
from .forecast import ForecastContext, auction_forecast, cid_forecast
from .optimizer import (
    WindowProblem,
    WindowSolution,
    brute_force_oracle,
    solve_lp_relaxation,
    solve_window,
)
from .engine import MarketData, ScenarioConfig, run_scenario, select_sets
from .ledger import Ledger, LedgerTrade, SkippedChange
from .accounting import (
    ScenarioReport,
    auction_profit,
    build_report,
    cid_profit,
    cycles,
    virtual_cycles,
)
from .synthetic import SyntheticSpec, gen_synthetic
