from datetime import date, datetime, time, timedelta, timezone
from zoneinfo import ZoneInfo

import pytest

from bessarb.data import AuctionPrices, Trade, TradeStore, clearing_price
from bessarb.engine import (
    MarketData,
    ScenarioConfig,
    run_scenario,
    select_sets,
    _quarter_universe,
)
from bessarb.errors import ConfigError, DataGapError
from bessarb.ledger import dispatch_residuals
from bessarb.model import Product, bess_from_discharge_duration, product_grid

UTC = timezone.utc
BERLIN = ZoneInfo("Europe/Berlin")


def _local(y, m, d, hh, mm=0):
    return datetime(y, m, d, hh, mm, tzinfo=BERLIN)


class TestScenarioConfig:
    def test_market_defaults(self, bess_1h):
        daa = ScenarioConfig("DAA", bess_1h, date(2023, 6, 1), date(2023, 6, 2))
        assert (daa.n_trade, daa.n_opt) == (24, 48)
        assert daa.dt_trade == timedelta(hours=24)
        ida = ScenarioConfig("IDA", bess_1h, date(2023, 6, 1), date(2023, 6, 2))
        assert (ida.n_trade, ida.n_opt) == (96, 192)
        cid = ScenarioConfig("CID_F", bess_1h, date(2023, 6, 1), date(2023, 6, 2))
        assert (cid.n_trade, cid.n_opt) == (3, 32)
        assert cid.dt_trade == timedelta(minutes=5)
        assert cid.cid_min_lead == timedelta(minutes=35)

    def test_trade_subset_of_opt_enforced(self, bess_1h):
        with pytest.raises(ConfigError):
            ScenarioConfig("CID_F", bess_1h, date(2023, 6, 1), date(2023, 6, 1),
                           n_opt=4, n_trade=5)

    def test_unknown_market(self, bess_1h):
        with pytest.raises(ConfigError):
            ScenarioConfig("XXX", bess_1h, date(2023, 6, 1), date(2023, 6, 1))

    def test_empty_range(self, bess_1h):
        with pytest.raises(ConfigError):
            ScenarioConfig("DAA", bess_1h, date(2023, 6, 2), date(2023, 6, 1))


class TestSelectSets:
    def test_cid_example_from_lead_time_gate(self, bess_1h):
        # at 14:26 with 8 optimized / 3 traded products, the first eligible
        # quarter-hour starts 15:15; trading ends at the 15:45 product and
        # the optimization horizon runs through the product ending 17:15
        cfg = ScenarioConfig("CID_F", bess_1h, date(2023, 1, 1), date(2023, 1, 2),
                             n_opt=8, n_trade=3)
        grid = _quarter_universe(cfg)
        sel = select_sets(cfg, _local(2023, 1, 1, 14, 26), grid)
        first = sel.trade[0].delivery_start.astimezone(BERLIN)
        assert (first.hour, first.minute) == (15, 15)
        last_traded = sel.trade[-1].delivery_start.astimezone(BERLIN)
        assert (last_traded.hour, last_traded.minute) == (15, 45)
        assert len(sel.opt) == 8
        last_opt_end = sel.opt[-1].delivery_end.astimezone(BERLIN)
        assert (last_opt_end.hour, last_opt_end.minute) == (17, 15)
        assert set(sel.trade) <= set(sel.opt)

    def test_cid_default_window_holds_32_quarters(self, bess_1h):
        cfg = ScenarioConfig("CID_F", bess_1h, date(2023, 1, 1), date(2023, 1, 2))
        grid = _quarter_universe(cfg)
        sel = select_sets(cfg, _local(2023, 1, 1, 14, 26), grid)
        assert len(sel.opt) == 32
        assert len(sel.trade) == 3
        assert not sel.truncated

    def test_cid_truncation_flagged_at_range_end(self, bess_1h):
        cfg = ScenarioConfig("CID_F", bess_1h, date(2023, 1, 1), date(2023, 1, 1))
        grid = _quarter_universe(cfg)
        sel = select_sets(cfg, _local(2023, 1, 1, 23, 0), grid)
        assert len(sel.trade) == 1  # the 23:35 gate leaves only the 23:45 product
        assert sel.truncated

    def test_auction_example_next_day_plus_lookahead(self, bess_1h):
        cfg = ScenarioConfig("DAA", bess_1h, date(2023, 1, 2), date(2023, 1, 3))
        grid = product_grid(date(2023, 1, 2), BERLIN, 60) + product_grid(
            date(2023, 1, 3), BERLIN, 60
        )
        sel = select_sets(cfg, _local(2023, 1, 1, 12, 0), grid)
        assert len(sel.trade) == 24
        assert len(sel.opt) == 48
        assert all(p.local_day(BERLIN) == date(2023, 1, 2) for p in sel.trade)

    def test_gate_boundary_is_strict(self, bess_1h):
        cfg = ScenarioConfig("CID_F", bess_1h, date(2023, 1, 1), date(2023, 1, 1))
        grid = _quarter_universe(cfg)
        # at 14:40 the 15:15 product has exactly 35 minutes of lead: excluded
        sel = select_sets(cfg, _local(2023, 1, 1, 14, 40), grid)
        first = sel.opt[0].delivery_start.astimezone(BERLIN)
        assert (first.hour, first.minute) == (15, 30)


def _profit(ledger):
    return sum(
        t.price_eur_mwh * -t.signed_volume_mw * t.product.duration_hours
        for t in ledger.trades
    )


class TestAuctionRun:
    def test_daa_flat_prices_no_trades(self, bess_1h):
        days = [date(2023, 6, 1)]
        auctions = AuctionPrices()
        for p in product_grid(days[0], BERLIN, 60):
            auctions.add("DAA", p, 50.0)
        data = MarketData(TradeStore([]), auctions)
        cfg = ScenarioConfig("DAA", bess_1h, days[0], days[0])
        ledger = run_scenario(cfg, data)
        assert ledger.trades == []
        assert all(e.net_mw == 0 for e in ledger.dispatched_entries())

    def test_missing_price_in_range_is_data_gap(self, bess_1h):
        auctions = AuctionPrices()
        products = product_grid(date(2023, 6, 1), BERLIN, 60)
        for p in products[:-1]:  # drop the last hour
            auctions.add("DAA", p, 50.0)
        data = MarketData(TradeStore([]), auctions)
        cfg = ScenarioConfig("DAA", bess_1h, date(2023, 6, 1), date(2023, 6, 1))
        with pytest.raises(DataGapError):
            run_scenario(cfg, data)

    def test_full_run_dispatch_feasible(self, tiny_data, bess_1h):
        cfg = ScenarioConfig("IDA", bess_1h, date(2023, 6, 1), date(2023, 6, 3))
        ledger = run_scenario(cfg, tiny_data)
        bal, bound = dispatch_residuals(ledger, bess_1h)
        assert bal <= 1e-9 and bound <= 1e-9
        # single trade per product at the auction price
        seen = set()
        for t in ledger.trades:
            assert t.product not in seen
            seen.add(t.product)
            assert t.price_eur_mwh == tiny_data.auctions.get("IDA", t.product)

    def test_index_market_trades_at_index(self, tiny_data, bess_1h):
        cfg = ScenarioConfig("ID1", bess_1h, date(2023, 6, 1), date(2023, 6, 2))
        ledger = run_scenario(cfg, tiny_data)
        assert ledger.trades
        table = tiny_data.indices
        for t in ledger.trades[:20]:
            assert t.price_eur_mwh == pytest.approx(table.get("ID1", t.product))


class TestCidRun:
    def test_trade_sums_match_dispatch_and_freeze_discipline(self, tiny_data, bess_2h):
        cfg = ScenarioConfig("CID_F", bess_2h, date(2023, 6, 1), date(2023, 6, 3))
        ledger = run_scenario(cfg, tiny_data)
        bal, bound = dispatch_residuals(ledger, bess_2h)
        assert bal <= 1e-9 and bound <= 1e-9
        by_product = {}
        for t in ledger.trades:
            by_product[t.product] = by_product.get(t.product, 0.0) + t.signed_volume_mw
        for p, net in by_product.items():
            assert net == pytest.approx(ledger.dispatched[p].net_mw, abs=1e-9)
        # no trade at or after each product's freeze time... trades only strictly
        # before the gate closes
        for t in ledger.trades:
            ft = ledger.positions.freeze_time(t.product)
            assert ft is not None
            assert t.exec_time <= ft
        # every traded product's executed price existed in the tick stream
        for t in ledger.trades[:50]:
            cp = clearing_price(tiny_data.store, t.product, t.exec_time)
            assert cp == pytest.approx(t.price_eur_mwh)

    def test_deterministic_byte_identical(self, tiny_data, bess_2h, tmp_path):
        cfg = ScenarioConfig("CID_F", bess_2h, date(2023, 6, 1), date(2023, 6, 2))
        files1 = run_scenario(cfg, tiny_data).save(tmp_path / "a")
        files2 = run_scenario(cfg, tiny_data).save(tmp_path / "b")
        for f1, f2 in zip(files1, files2):
            assert f1.read_bytes() == f2.read_bytes()

    def test_cid_f_equals_cid_pf_under_truthful_forecasts(self, const_data, bess_1h):
        led_f = run_scenario(
            ScenarioConfig("CID_F", bess_1h, date(2023, 6, 1), date(2023, 6, 3)), const_data
        )
        led_pf = run_scenario(
            ScenarioConfig("CID_PF", bess_1h, date(2023, 6, 1), date(2023, 6, 3)), const_data
        )
        assert len(led_f.trades) == len(led_pf.trades)
        for a, b in zip(led_f.trades, led_pf.trades):
            assert (a.exec_time, a.product, a.signed_volume_mw, a.price_eur_mwh) == (
                b.exec_time, b.product, b.signed_volume_mw, b.price_eur_mwh
            )
        assert led_f.dispatched == led_pf.dispatched
        assert [(s.exec_time, s.product) for s in led_f.skipped] == [
            (s.exec_time, s.product) for s in led_pf.skipped
        ]

    def test_liquidity_gap_freezes_last_executed_position(self, bess_1h):
        # one product trades early, then the market goes quiet: the intended
        # unwind can never execute, the position freezes at its last value
        day = date(2023, 6, 1)
        quarters = product_grid(day, BERLIN, 15)
        auctions = AuctionPrices()
        trades = []
        for i, p in enumerate(quarters):
            auctions.add("IDA", p, 50.0)
        target = quarters[40]
        cheap = quarters[41]
        # target: liquid until 2h before delivery at a tempting price, then quiet
        for m in (170, 150, 130, 125):
            trades.append(Trade(target, target.delivery_start - timedelta(minutes=m), 20.0, 1.0))
        # neighbor: liquid all the way, rich price (sell target here instead)
        for m in (170, 150, 90, 60, 44, 39, 37):
            trades.append(Trade(cheap, cheap.delivery_start - timedelta(minutes=m), 90.0, 1.0))
        data = MarketData(TradeStore(trades), auctions)
        cfg = ScenarioConfig("CID_F", bess_1h, day, day)
        ledger = run_scenario(cfg, data)
        assert ledger.skipped  # something wanted to trade and could not
        bal, bound = dispatch_residuals(ledger, bess_1h)
        assert bal <= 1e-9 and bound <= 1e-9

    def test_subset_law_and_engine_matches_select_sets(self, tiny_data, bess_1h):
        # replay the engine's product selection independently at sampled instants
        cfg = ScenarioConfig("CID_F", bess_1h, date(2023, 6, 1), date(2023, 6, 1))
        grid = _quarter_universe(cfg)
        t = cfg.t0
        while t < _local(2023, 6, 1, 23, 25):
            sel = select_sets(cfg, t, grid)
            assert set(sel.trade) <= set(sel.opt)
            assert len(sel.opt) <= cfg.n_opt
            t += timedelta(hours=3, minutes=5)
