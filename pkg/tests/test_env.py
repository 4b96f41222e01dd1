import math

import numpy as np
import pytest

from fxdrqn import features as F
from fxdrqn.env import (
    ACTIONS, BankruptcyError, PortfolioLedger, TradingEnv, augment, baseline_equity, bp_unit,
    commission, mark_to_market,
)
from fxdrqn.marketdata import Bar, synthetic_random_walk, synthetic_sinusoid


@pytest.fixture(scope="module")
def walk():
    return synthetic_random_walk(F.WARMUP + 600, seed=11)


@pytest.fixture(scope="module")
def walk_core(walk):
    return F.core_features(walk)


def test_commission_examples():
    assert commission(0, 1, 100_000, 8e-6) == pytest.approx(0.8, rel=1e-12)
    assert commission(1, 1, 100_000, 8e-6) == 0.0
    assert commission(1, -1, 100_000, 8e-6) == pytest.approx(1.6, rel=1e-12)
    assert commission(1, -1, 100_000, 8e-6) == 2 * commission(0, 1, 100_000, 8e-6)


def test_bp_units():
    assert bp_unit("EURUSD") == 1e-4
    assert bp_unit("USD/JPY") == 1e-2
    assert 0.08 * bp_unit("GBPUSD") == pytest.approx(8e-6)


def test_step_example():
    v = mark_to_market(100_000.0, 0, 1, 1.0, 1.001, 100_000.0, 8e-6)
    assert v == pytest.approx(100_099.2, rel=1e-12)
    assert math.log(v / 100_000.0) == pytest.approx(9.91508e-4, rel=1e-5)


def one_bar_env(open_, close, position=0, spread_bp=0.0):
    led = PortfolioLedger(100_000.0, 100_000.0, spread_bp * 1e-4, position)
    return led, Bar(0, open_, max(open_, close), min(open_, close), close, 5)


def test_augment_paper_example():
    # +10 of PnL for a long position means -10 for short and 0 for flat
    led, bar = one_bar_env(1.0, 1.0001)
    tr = augment(1, bar, led, np.zeros(4), np.zeros(7), 1)
    v = 100_000.0
    gain = 100_000.0 * (1.0001 - 1.0)
    assert gain == pytest.approx(10.0)
    np.testing.assert_allclose(tr.reward_vec, [math.log(1 - gain / v), 0.0, math.log(1 + gain / v)], rtol=1e-12)


def test_augment_zero_move():
    led, bar = one_bar_env(1.2, 1.2)
    assert list(augment(0, bar, led, np.zeros(4), np.zeros(7), 1).reward_vec) == [0.0, 0.0, 0.0]


def test_bankruptcy():
    led, bar = one_bar_env(1.0, 3.0)
    with pytest.raises(BankruptcyError):
        augment(1, bar, led, np.zeros(4), np.zeros(7), 1)


def test_env_flat_and_hold(walk, walk_core):
    env = TradingEnv(walk, "EURUSD", spread_bp=0.08, core=walk_core)
    r, *_ = env.step(0)
    assert r == 0.0 and env.ledger.value == 100_000.0
    env.step(1)
    k = env.k + 1
    env.ds.data[env.pair_index, k, 3]  # bar exists
    o, c = env._bars[k, 0], env._bars[k, 3]
    v0 = env.ledger.value
    r, *_ = env.step(1)
    assert env.ledger.value == v0 + 100_000.0 * (c - o)
    assert r == math.log(env.ledger.value / v0)


def test_state_layout(walk, walk_core):
    env = TradingEnv(walk, "EURUSD", core=walk_core)
    s = env.reset()
    assert len(s) == 198 and list(s[-3:]) == [0, 1, 0]
    _, s2, _, tr = env.step(-1)
    assert list(s2[-3:]) == [1, 0, 0]
    np.testing.assert_array_equal(s2[:-3], tr.next_core)
    np.testing.assert_array_equal(tr.next_state(-1), s2)


def test_telescoping_and_consistency(walk, walk_core):
    rng = np.random.default_rng(5)
    env = TradingEnv(walk, "GBPUSD", spread_bp=0.08, core=walk_core)
    total = 0.0
    while not env.done:
        a = int(rng.choice(ACTIONS))
        r, _, _, tr = env.step(a)
        assert tr.reward_vec[a + 1] == r
        total += r
    assert total == pytest.approx(math.log(env.ledger.value / 100_000.0), rel=1e-9)


def test_constant_action_matches_baseline(walk, walk_core):
    for a, mode in ((1, "buy"), (-1, "sell")):
        env = TradingEnv(walk, "AUDUSD", spread_bp=0.0, core=walk_core)
        vals = [env.ledger.value]
        while not env.done:
            env.step(a)
            vals.append(env.ledger.value)
        base = baseline_equity(walk, "AUDUSD", mode, spread_bp=0.0)
        np.testing.assert_array_equal(np.array(vals), base)


def test_baselines_mirror_and_flat():
    ds = synthetic_sinusoid(F.WARMUP + 50)
    buy = baseline_equity(ds, "EURUSD", "buy")
    sell = baseline_equity(ds, "EURUSD", "sell")
    np.testing.assert_allclose(buy - 1e5, -(sell - 1e5), atol=1e-9)

    ds.data[:, :, :4] = 1.25
    flat = baseline_equity(ds, "EURUSD", "buy", spread_bp=0.08)
    assert np.all(flat[1:] == 1e5 - 100_000 * 0.08e-4)


def test_buy_and_hold_rises_on_rising_prices():
    ds = synthetic_sinusoid(F.WARMUP + 60, period=1000.0)
    eq = baseline_equity(ds, "EURUSD", "buy", spread_bp=0.08)
    assert np.all(np.diff(eq[1:]) > 0)


def test_trade_bookkeeping():
    led = PortfolioLedger(1e5, 1e5, 1e-5)
    led.book(1, 10, 1.0, 1.01)     # open long: fee 1
    led.book(1, 11, 1.01, 1.02)
    led.book(-1, 12, 1.02, 1.00)   # reversal: fee 2 split 1/1
    led.book(0, 13, 1.00, 1.00)    # close short: fee 1
    assert len(led.trades) == 2
    long_, short = led.trades
    assert (long_.direction, long_.entry_time, long_.exit_time) == (1, 10, 12)
    assert long_.pnl == pytest.approx(1e5 * 0.02 - 1 - 1)
    assert long_.exit_price == 1.02
    assert (short.direction, short.entry_time, short.exit_time) == (-1, 12, 13)
    assert short.pnl == pytest.approx(1e5 * 0.02 - 1 - 1)
    assert led.open_trade is None


def test_trade_pnls_sum_to_equity_change(walk, walk_core):
    rng = np.random.default_rng(9)
    env = TradingEnv(walk, "EURUSD", spread_bp=0.5, core=walk_core)
    while not env.done:
        env.step(int(rng.choice(ACTIONS)))
    env_pnl = env.ledger.value - 1e5
    booked = sum(t.pnl for t in env.ledger.trades)
    if env.ledger.open_trade is not None:
        booked += env.ledger.open_trade.pnl
    assert booked == pytest.approx(env_pnl, abs=1e-6)
