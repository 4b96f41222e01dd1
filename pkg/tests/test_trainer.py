import math

import numpy as np
import pytest

from fxdrqn import features as F
from fxdrqn.env import mark_to_market
from fxdrqn.marketdata import synthetic_random_walk
from fxdrqn.trainer import OnlineTrainer, RunConfig, RunLog, aggregate, run, run_suite


@pytest.fixture(scope="module")
def ds():
    return synthetic_random_walk(F.WARMUP + 700, seed=21)


@pytest.fixture(scope="module")
def core(ds):
    return F.core_features(ds)


def expected_events(n_steps, T=96, N=480):
    # steps counter is i + 1 on the i-th iteration; memory holds i transitions
    return sum(1 for i in range(1, n_steps + 1) if i >= N and (i + 1) % T == 0)


@pytest.mark.parametrize("n_steps", [479, 480 + 96])
def test_training_event_count(ds, core, n_steps):
    cfg = RunConfig(pair="EURUSD", max_steps=n_steps)
    res = run(cfg, ds, core)
    assert len(res.log) == n_steps
    assert res.log.train_events == expected_events(n_steps)
    assert expected_events(480 + 96) == 1 and expected_events(479) == 0
    trained = [s for s, l in zip(res.log.step, res.log.loss) if not math.isnan(l)]
    assert all(s % 96 == 0 and s - 1 >= 480 for s in trained)


def test_runlog_satisfies_value_recursion(ds, core):
    cfg = RunConfig(pair="GBPUSD", max_steps=300, spread_bp=0.3)
    res = run(cfg, ds, core)
    o, c = ds.opens("GBPUSD"), ds.closes("GBPUSD")
    spread = 0.3 * 1e-4
    v, prev = cfg.initial_cash, 0
    assert res.log.step == list(range(2, 302))
    for k, a, value, r in zip(res.log.time_index, res.log.action, res.log.value, res.log.reward):
        v_new = mark_to_market(v, prev, a, o[k], c[k], cfg.trade_size, spread)
        assert value == pytest.approx(v_new, rel=1e-9)
        assert r == pytest.approx(math.log(v_new / v), rel=1e-9, abs=1e-15)
        v, prev = v_new, a


def test_same_seed_bit_identical(ds, core):
    cfg = RunConfig(pair="EURUSD", max_steps=600, seed=4)
    a, b = run(cfg, ds, core), run(cfg, ds, core)
    assert a.log.to_csv() == b.log.to_csv()
    assert a.checkpoint == b.checkpoint
    c = run(RunConfig(pair="EURUSD", max_steps=600, seed=5), ds, core)
    assert c.log.to_csv() != a.log.to_csv()


def test_checkpoint_resume_reproduces_trajectory(ds, core, tmp_path):
    cfg = RunConfig(pair="EURUSD", max_steps=620, seed=2)
    full = run(cfg, ds, core)
    tr = OnlineTrainer(cfg, ds, core)
    tr.run(max_steps=500)
    tr.save_checkpoint(tmp_path / "mid.ckpt")
    resumed = OnlineTrainer.from_checkpoint(tmp_path / "mid.ckpt", ds, core)
    rest = resumed.run(max_steps=120)
    assert rest.log.to_csv() == full.log.to_csv()
    assert rest.checkpoint == full.checkpoint


def test_runlog_csv_round_trip(ds, core, tmp_path):
    res = run(RunConfig(pair="EURUSD", max_steps=50), ds, core)
    res.log.save(tmp_path / "log.csv")
    back = RunLog.load(tmp_path / "log.csv")
    assert back.to_csv() == res.log.to_csv()
    assert back.reward == res.log.reward


def test_bankruptcy_marks_failed(core):
    bad = synthetic_random_walk(F.WARMUP + 50, seed=1)
    i = bad.index("EURUSD")
    bad.data[i, F.WARMUP + 5, 3] = bad.data[i, F.WARMUP + 5, 0] * 5  # huge one-bar move
    res = run(RunConfig(pair="EURUSD"), bad, F.core_features(bad))
    assert res.failed and "portfolio value" in res.error
    assert len(res.log) < 50


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(pair="XXXYYY")
    with pytest.raises(ValueError):
        RunConfig(spread_bp=-1)
    assert RunConfig(pair="eur/usd").pair == "EURUSD"


def test_suite_aggregation(ds):
    base = RunConfig(pair="EURUSD", max_steps=40)
    (suite,) = run_suite([base], repeats=5, dataset=ds)
    assert [r.config.seed for r in suite.results] == [0, 1, 2, 3, 4]
    assert len(suite.curves) == 5 and len(suite.mean) == 41
    (same,) = run_suite([base], repeats=3, dataset=ds, seeds=[7, 7, 7])
    assert np.all(same.std == 0.0)
    (empty,) = run_suite([base], repeats=0, dataset=ds)
    assert empty.results == [] and len(empty.mean) == 0


def test_aggregate_values():
    mean, std = aggregate([np.array([1.0, 2.0]), np.array([3.0, 6.0])])
    assert list(mean) == [2.0, 4.0] and list(std) == [1.0, 2.0]
