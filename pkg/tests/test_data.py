from datetime import datetime, timedelta, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bessarb.data import (
    AuctionPrices,
    IndexTable,
    Trade,
    TradeStore,
    clearing_price,
    index_price,
    ingest_auction_prices,
    ingest_trades,
    write_index_csv,
)
from bessarb.errors import ParseError, ValidationError
from bessarb.model import Product

UTC = timezone.utc
P = Product(datetime(2023, 6, 1, 12, 0, tzinfo=UTC), 15)
S = P.delivery_start


def _mk_trade(minutes_before, price, volume=1.0, product=P):
    return Trade(product, product.delivery_start - timedelta(minutes=minutes_before), price, volume)


class TestTrade:
    def test_volume_positive(self):
        with pytest.raises(ValidationError):
            _mk_trade(30, 50.0, volume=0.0)

    def test_exec_before_delivery(self):
        with pytest.raises(ValidationError):
            Trade(P, S, 50.0, 1.0)
        with pytest.raises(ValidationError):
            Trade(P, S + timedelta(seconds=1), 50.0, 1.0)


class TestIngest:
    HEADER = "delivery_start,duration_min,exec_time,price_eur_mwh,volume_mw\n"

    def _write(self, tmp_path, rows):
        f = tmp_path / "trades.csv"
        f.write_text(self.HEADER + "".join(rows))
        return f

    def test_three_valid_rows(self, tmp_path):
        f = self._write(
            tmp_path,
            [
                "2023-06-01T14:00:00+02:00,15,2023-06-01T12:00:00+02:00,50.0,1.0\n",
                "2023-06-01T14:00:00+02:00,15,2023-06-01T12:05:00+02:00,52.0,0.5\n",
                "2023-06-01T14:15:00+02:00,15,2023-06-01T12:00:00+02:00,49.0,2.0\n",
            ],
        )
        store = ingest_trades(f)
        assert len(store) == 3
        assert len(store.products()) == 2

    def test_zero_volume_names_line(self, tmp_path):
        f = self._write(
            tmp_path,
            [
                "2023-06-01T14:00:00+02:00,15,2023-06-01T12:00:00+02:00,50.0,1.0\n",
                "2023-06-01T14:00:00+02:00,15,2023-06-01T12:05:00+02:00,52.0,0\n",
            ],
        )
        with pytest.raises(ValidationError) as exc:
            ingest_trades(f)
        assert ":3" in str(exc.value)

    def test_bad_timestamp_is_parse_error(self, tmp_path):
        f = self._write(tmp_path, ["not-a-time,15,2023-06-01T12:00:00+02:00,50.0,1.0\n"])
        with pytest.raises(ParseError) as exc:
            ingest_trades(f)
        assert ":2" in str(exc.value)

    def test_naive_timestamp_rejected(self, tmp_path):
        f = self._write(tmp_path, ["2023-06-01T14:00:00,15,2023-06-01T12:00:00+02:00,50.0,1.0\n"])
        with pytest.raises(ParseError):
            ingest_trades(f)

    def test_trade_after_delivery_names_line(self, tmp_path):
        f = self._write(
            tmp_path, ["2023-06-01T14:00:00+02:00,15,2023-06-01T14:00:00+02:00,50.0,1.0\n"]
        )
        with pytest.raises(ValidationError) as exc:
            ingest_trades(f)
        assert ":2" in str(exc.value)

    def test_wrong_header(self, tmp_path):
        f = tmp_path / "bad.csv"
        f.write_text("a,b,c\n")
        with pytest.raises(ParseError):
            ingest_trades(f)

    def test_equal_exec_times_keep_input_order(self, tmp_path):
        f = self._write(
            tmp_path,
            [
                "2023-06-01T14:00:00+02:00,15,2023-06-01T12:00:00+02:00,50.0,1.0\n",
                "2023-06-01T14:00:00+02:00,15,2023-06-01T12:00:00+02:00,60.0,2.0\n",
            ],
        )
        store = ingest_trades(f)
        trades = store.trades(Product(datetime(2023, 6, 1, 14, 0, tzinfo=timezone(timedelta(hours=2))), 15))
        assert [t.price for t in trades] == [50.0, 60.0]

    def test_idempotent(self, tmp_path):
        f = self._write(
            tmp_path,
            [
                "2023-06-01T14:00:00+02:00,15,2023-06-01T12:00:00+02:00,50.0,1.0\n",
                "2023-06-01T14:00:00+02:00,15,2023-06-01T11:00:00+02:00,52.0,0.5\n",
            ],
        )
        assert ingest_trades(f) == ingest_trades(f)


class TestAuctionPrices:
    def test_duration_checked_per_market(self):
        prices = AuctionPrices()
        hourly = Product(datetime(2023, 6, 1, 12, 0, tzinfo=UTC), 60)
        with pytest.raises(ValidationError):
            prices.add("DAA", P, 10.0)  # quarter product in the hourly auction
        with pytest.raises(ValidationError):
            prices.add("IDA", hourly, 10.0)
        prices.add("DAA", hourly, 10.0)
        prices.add("IDA", P, 11.0)
        assert prices.get("DAA", hourly) == 10.0

    def test_duplicate_rejected(self):
        prices = AuctionPrices()
        prices.add("IDA", P, 11.0)
        with pytest.raises(ValidationError):
            prices.add("IDA", P, 12.0)

    def test_ingest_auction_file(self, tmp_path):
        f = tmp_path / "a.csv"
        f.write_text(
            "market,delivery_start,duration_min,price_eur_mwh\n"
            "DAA,2023-06-01T12:00:00+02:00,60,80.5\n"
            "IDA,2023-06-01T12:00:00+02:00,15,82.25\n"
        )
        prices = ingest_auction_prices(f)
        assert len(prices) == 2


class TestClearingPrice:
    def test_mean_of_two(self):
        store = TradeStore([_mk_trade(40, 10.0), _mk_trade(40, 20.0)])
        t = S - timedelta(minutes=40, seconds=30)
        assert clearing_price(store, P, t) == pytest.approx(15.0)

    def test_absent_when_no_trades(self):
        store = TradeStore([_mk_trade(40, 10.0)])
        assert clearing_price(store, P, S - timedelta(minutes=20)) is None
        assert clearing_price(store, Product(S + timedelta(hours=1), 15), S - timedelta(hours=1)) is None

    def test_interval_boundaries(self):
        # trade exactly at t is excluded, trade exactly at t+60s included
        t = S - timedelta(minutes=40)
        store = TradeStore(
            [
                Trade(P, t, 10.0, 1.0),
                Trade(P, t + timedelta(seconds=60), 42.0, 1.0),
            ]
        )
        assert clearing_price(store, P, t) == pytest.approx(42.0)

    @settings(max_examples=50, deadline=None)
    @given(st.data())
    def test_matches_brute_force(self, data):
        minutes = data.draw(
            st.lists(st.floats(0.5, 300), min_size=0, max_size=30), label="offsets"
        )
        trades = [
            _mk_trade(m, price=float(i), volume=1.0) for i, m in enumerate(minutes)
        ]
        store = TradeStore(trades)
        probe = data.draw(st.floats(0.0, 301), label="probe")
        t = S - timedelta(minutes=probe)
        got = clearing_price(store, P, t)
        window = [
            tr.price
            for tr in trades
            if t < tr.exec_time <= t + timedelta(minutes=1)
        ]
        if not window:
            assert got is None
        else:
            assert got == pytest.approx(sum(window) / len(window), abs=1e-9)


class TestIndexPrice:
    def test_weighted_mean_id1(self):
        store = TradeStore([_mk_trade(30, 100.0, 1.0), _mk_trade(10, 50.0, 3.0)])
        assert index_price(store, P, "ID1") == pytest.approx(62.5)

    def test_single_trade_idfull(self):
        store = TradeStore([_mk_trade(400, 80.0, 2.0)])
        assert index_price(store, P, "IDFULL") == pytest.approx(80.0)

    def test_window_membership(self):
        store = TradeStore([_mk_trade(120, 70.0, 1.0)])
        assert index_price(store, P, "ID1") is None
        assert index_price(store, P, "ID3") == pytest.approx(70.0)

    def test_volume_weighting_differs_from_mean(self):
        store = TradeStore([_mk_trade(30, 100.0, 9.0), _mk_trade(20, 0.0, 1.0)])
        assert index_price(store, P, "ID1") == pytest.approx(90.0)

    def test_brute_force_over_synthetic_day(self, tiny_data):
        store = tiny_data.store
        rng = np.random.default_rng(0)
        products = store.products()
        for p in [products[i] for i in rng.choice(len(products), 25, replace=False)]:
            trades = store.trades(p)
            for kind, width in (("ID1", 1), ("ID3", 3), ("IDFULL", None)):
                lo = (
                    p.delivery_start - timedelta(hours=width)
                    if width
                    else datetime.min.replace(tzinfo=UTC)
                )
                window = [t for t in trades if lo <= t.exec_time < p.delivery_start]
                got = index_price(store, p, kind)
                if not window:
                    assert got is None
                else:
                    expect = sum(t.price * t.volume for t in window) / sum(
                        t.volume for t in window
                    )
                    assert got == pytest.approx(expect, abs=1e-9)


def test_index_export_column_order(tmp_path, tiny_data):
    table = IndexTable.compute(tiny_data.store, tiny_data.store.products()[:4])
    out = tmp_path / "indices.csv"
    write_index_csv(table, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "delivery_start,duration_min,id1,idfull,id3"
    assert len(lines) == 5
