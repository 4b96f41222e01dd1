"""Performance and trade statistics computed from run logs.

"Daily" means a block of 96 consecutive 15-minute steps; ratios are
annualized with 252 days. Undefined ratios (zero dispersion) are ``None``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .env import TradeRecord

STEPS_PER_DAY = 96
TRADING_DAYS = 252


def daily_returns(step_log_returns: Sequence[float], group: int = STEPS_PER_DAY) -> np.ndarray:
    """Sum step log returns over consecutive blocks of ``group``; a partial final block is dropped."""
    r = np.asarray(step_log_returns, dtype=np.float64)
    n = len(r) // group
    return r[: n * group].reshape(n, group).sum(axis=1)


def annualize(daily: Sequence[float]) -> tuple[float | None, float | None, float | None]:
    """(annual return, Sharpe, Sortino) from daily log returns, population moments."""
    d = np.asarray(daily, dtype=np.float64)
    if len(d) == 0:
        return None, None, None
    mean = float(d.mean())
    annual = mean * TRADING_DAYS
    if len(d) < 2:
        return annual, None, None
    std = float(d.std())
    downside = float(np.sqrt(np.mean(np.minimum(d, 0.0) ** 2)))
    sharpe = mean / std * math.sqrt(TRADING_DAYS) if std > 0 else None
    sortino = mean / downside * math.sqrt(TRADING_DAYS) if downside > 0 else None
    return annual, sharpe, sortino


def max_drawdown(equity: Sequence[float]) -> float:
    """Worst peak-to-trough decline as a fraction of the running peak (<= 0)."""
    e = np.asarray(equity, dtype=np.float64)
    if len(e) == 0:
        return 0.0
    peak = np.maximum.accumulate(e)
    return float(np.min((e - peak) / peak))


def daily_equity(initial: float, daily: Sequence[float]) -> np.ndarray:
    """Equity sampled at day boundaries, starting with ``initial``."""
    return initial * np.exp(np.concatenate([[0.0], np.cumsum(daily)]))


def baseline_correlation(agent_daily: Sequence[float], baseline_daily: Sequence[float]) -> float | None:
    a = np.asarray(agent_daily, dtype=np.float64)
    b = np.asarray(baseline_daily, dtype=np.float64)
    if len(a) != len(b):
        raise ValueError("series lengths differ")
    if len(a) < 2 or a.std() == 0 or b.std() == 0:
        return None
    return float(np.clip(np.corrcoef(a, b)[0, 1], -1.0, 1.0))


def log_returns(equity: Sequence[float]) -> np.ndarray:
    e = np.asarray(equity, dtype=np.float64)
    return np.log(e[1:] / e[:-1])


def pick_baseline(buy: np.ndarray, sell: np.ndarray) -> tuple[str, np.ndarray]:
    """The hold strategy with the larger final equity."""
    return ("buy", buy) if buy[-1] >= sell[-1] else ("sell", sell)


@dataclass
class TradeStats:
    num_trades: int
    win_rate: float
    avg_profit: float
    avg_loss: float
    expectation: float
    frequency: float
    no_trades: bool = False


def trade_stats(trades: Sequence[TradeRecord], total_steps: int) -> TradeStats:
    """Win rate, average win/loss and expectation over closed trades.

    A win is pnl > 0. Frequency is steps per trade.
    """
    pnl = np.array([t.pnl for t in trades], dtype=np.float64)
    if len(pnl) == 0:
        return TradeStats(0, 0.0, 0.0, 0.0, 0.0, 0.0, no_trades=True)
    wins = pnl[pnl > 0]
    losses = pnl[pnl <= 0]
    win_rate = len(wins) / len(pnl)
    avg_profit = float(wins.mean()) if len(wins) else 0.0
    avg_loss = float(losses.mean()) if len(losses) else 0.0
    return TradeStats(
        num_trades=len(pnl),
        win_rate=win_rate,
        avg_profit=avg_profit,
        avg_loss=avg_loss,
        expectation=expectation(win_rate, avg_profit, avg_loss),
        frequency=total_steps / len(pnl),
    )


def expectation(win_rate: float, avg_profit: float, avg_loss: float) -> float:
    return win_rate * avg_profit + (1.0 - win_rate) * avg_loss


@dataclass
class MetricsReport:
    net_profit: float
    annual_return: float | None
    baseline_annual_return: float | None
    sharpe: float | None
    sortino: float | None
    mdd: float
    corr_baseline: float | None
    num_trades: int
    win_rate: float
    avg_profit: float
    avg_loss: float
    expectation: float
    frequency: float
    baseline: str = "buy"

    def to_dict(self) -> dict:
        return asdict(self)


def compute_report(rewards: Sequence[float], values: Sequence[float], initial: float,
                   trades: Sequence[TradeRecord], buy_equity: np.ndarray,
                   sell_equity: np.ndarray) -> MetricsReport:
    """Table-style metrics for one run.

    ``buy_equity``/``sell_equity`` are the hold baselines over the same steps,
    each starting at ``initial``.
    """
    daily = daily_returns(rewards)
    annual, sharpe, sortino = annualize(daily)
    name, base = pick_baseline(buy_equity, sell_equity)
    base_daily = daily_returns(log_returns(base[: len(rewards) + 1]))
    base_annual, _, _ = annualize(base_daily)
    corr = baseline_correlation(daily, base_daily) if len(daily) >= 2 else None
    ts = trade_stats(trades, len(rewards))
    final = values[-1] if len(values) else initial
    return MetricsReport(
        net_profit=float(final - initial),
        annual_return=annual,
        baseline_annual_return=base_annual,
        sharpe=sharpe,
        sortino=sortino,
        mdd=max_drawdown(daily_equity(initial, daily)),
        corr_baseline=corr,
        num_trades=ts.num_trades,
        win_rate=ts.win_rate,
        avg_profit=ts.avg_profit,
        avg_loss=ts.avg_loss,
        expectation=ts.expectation,
        frequency=ts.frequency,
        baseline=name,
    )


def _fmt(x, pct: bool = False) -> str:
    if x is None:
        return "n/a"
    if pct:
        return f"{100 * x:.2f}%"
    if isinstance(x, int):
        return str(x)
    return f"{x:.4f}"


SUMMARY_ROWS = (
    ("Net Profit", "net_profit", False),
    ("Annual Return", "annual_return", True),
    ("Baseline Return", "baseline_annual_return", True),
    ("Sharpe", "sharpe", False),
    ("Sortino", "sortino", False),
    ("MDD", "mdd", True),
    ("Corr", "corr_baseline", False),
    ("Num Trades", "num_trades", False),
    ("Win Rate", "win_rate", True),
    ("Avg Profit", "avg_profit", False),
    ("Avg Loss", "avg_loss", False),
    ("Expect", "expectation", False),
    ("Freq", "frequency", False),
)


def format_summary(report: MetricsReport, title: str = "") -> str:
    lines = [title] if title else []
    width = max(len(label) for label, _, _ in SUMMARY_ROWS)
    for label, key, pct in SUMMARY_ROWS:
        lines.append(f"{label:<{width}}  {_fmt(getattr(report, key), pct)}")
    lines.append(f"{'Baseline':<{width}}  {report.baseline}-and-hold")
    return "\n".join(lines) + "\n"


EQUITY_COLUMNS = ("time", "equity", "baseline_equity")
SUITE_COLUMNS = ("time", "mean", "sigma", "lower", "upper", "baseline_equity")


def _num(x: float) -> str:
    return repr(float(x))


def emit_report(report: MetricsReport | None, equity: np.ndarray | None, baseline: np.ndarray | None,
                summary_path: str | Path | None, csv_path: str | Path,
                suite: tuple[np.ndarray, np.ndarray, list[np.ndarray]] | None = None) -> None:
    """Write the text summary and the equity CSV.

    Single run: columns time, equity, baseline_equity. With ``suite`` given as
    (mean, sigma, curves): time, mean, sigma, lower, upper, baseline_equity,
    then one ``run_i`` column per curve.
    """
    csv_path = Path(csv_path)
    try:
        if summary_path is not None and report is not None:
            Path(summary_path).write_text(format_summary(report))
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if suite is None:
                w.writerow(EQUITY_COLUMNS)
                n = 0 if equity is None else len(equity)
                for t in range(n):
                    b = baseline[t] if baseline is not None and t < len(baseline) else math.nan
                    w.writerow([t, _num(equity[t]), _num(b)])
            else:
                mean, sigma, curves = suite
                w.writerow(SUITE_COLUMNS + tuple(f"run_{i}" for i in range(len(curves))))
                for t in range(len(mean)):
                    b = baseline[t] if baseline is not None and t < len(baseline) else math.nan
                    w.writerow([t, _num(mean[t]), _num(sigma[t]), _num(mean[t] - sigma[t]),
                                _num(mean[t] + sigma[t]), _num(b)] + [_num(c[t]) for c in curves])
    except OSError as exc:
        raise OSError(f"cannot write report to {csv_path}: {exc}") from exc
