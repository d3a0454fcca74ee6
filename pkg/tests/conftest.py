import pytest
from datetime import date

from bessarb.data import ingest_auction_prices, ingest_trades
from bessarb.engine import MarketData
from bessarb.model import bess_from_discharge_duration
from bessarb.synthetic import SyntheticSpec, gen_synthetic

TINY_START = date(2023, 6, 1)
TINY_DAYS = 3


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Three synthetic days, seed 7; shared by most engine-level tests."""
    root = tmp_path_factory.mktemp("tiny")
    spec = SyntheticSpec(start=TINY_START, days=TINY_DAYS)
    auction_path, ticks_path = gen_synthetic(7, spec, root / "auctions.csv", root / "ticks.csv")
    return {"auctions": auction_path, "ticks": ticks_path, "spec": spec}


@pytest.fixture(scope="session")
def tiny_data(tiny_dataset) -> MarketData:
    return MarketData(
        ingest_trades(tiny_dataset["ticks"]),
        ingest_auction_prices(tiny_dataset["auctions"]),
    )


@pytest.fixture(scope="session")
def const_dataset(tmp_path_factory):
    """Synthetic days with constant per-product prices: the dual-regime
    forecast coincides with every realized clearing price."""
    root = tmp_path_factory.mktemp("const")
    spec = SyntheticSpec(start=TINY_START, days=TINY_DAYS, constant_product_prices=True)
    auction_path, ticks_path = gen_synthetic(11, spec, root / "auctions.csv", root / "ticks.csv")
    return {"auctions": auction_path, "ticks": ticks_path, "spec": spec}


@pytest.fixture(scope="session")
def const_data(const_dataset) -> MarketData:
    return MarketData(
        ingest_trades(const_dataset["ticks"]),
        ingest_auction_prices(const_dataset["auctions"]),
    )


@pytest.fixture(scope="session")
def bess_1h():
    return bess_from_discharge_duration(1.0, 1.0, 0.92)


@pytest.fixture(scope="session")
def bess_2h():
    return bess_from_discharge_duration(1.0, 2.0, 0.92)
