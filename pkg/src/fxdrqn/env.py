"""Single-pair trading MDP with target-position actions and action augmentation.

Timing: the observation at grid slot k is built from bars up to and including
k. The action chosen from it is filled at the open of slot k + 1 and marked to
that bar's close.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import features as F
from .marketdata import AlignedDataset, Bar, normalize_pair

ACTIONS = (-1, 0, 1)


class BankruptcyError(RuntimeError):
    pass


def action_index(value: int) -> int:
    return value + 1


def action_value(index: int) -> int:
    return index - 1


def bp_unit(pair: str) -> float:
    """Price units per basis point: 0.01 for JPY-quoted pairs, else 0.0001."""
    return 0.01 if normalize_pair(pair).endswith("JPY") else 0.0001


def commission(a_prev: int, a_new: int, trade_size: float, spread: float) -> float:
    return trade_size * abs(a_new - a_prev) * spread


def mark_to_market(v_prev: float, a_prev: int, a_new: int, open_: float, close: float,
                   trade_size: float, spread: float) -> float:
    """Portfolio value after holding ``a_new`` over one bar, entered from ``a_prev``."""
    return v_prev + a_new * trade_size * (close - open_) - commission(a_prev, a_new, trade_size, spread)


@dataclass
class TradeRecord:
    direction: int
    entry_time: int
    entry_price: float
    exit_time: int = -1
    exit_price: float = float("nan")
    pnl: float = 0.0


@dataclass
class PortfolioLedger:
    value: float
    trade_size: float
    spread: float
    position: int = 0
    trades: list[TradeRecord] = field(default_factory=list)
    open_trade: TradeRecord | None = None

    def book(self, a_new: int, grid_index: int, open_: float, close: float) -> None:
        """Update trade bookkeeping for one executed bar.

        On a reversal the commission is split half to the closed trade and
        half to the new one.
        """
        a_prev = self.position
        fee = commission(a_prev, a_new, self.trade_size, self.spread)
        if a_new != a_prev and self.open_trade is not None:
            t = self.open_trade
            t.exit_time = grid_index
            t.exit_price = open_
            t.pnl -= fee / 2 if a_new != 0 else fee
            self.trades.append(t)
            self.open_trade = None
            if a_new != 0:
                fee = fee / 2
        if a_new != a_prev and a_new != 0:
            self.open_trade = TradeRecord(a_new, grid_index, open_, pnl=-fee)
        if self.open_trade is not None:
            self.open_trade.pnl += a_new * self.trade_size * (close - open_)
        self.position = a_new


@dataclass
class AugmentedTransition:
    state: np.ndarray  # observation, position = actual previous action
    reward_vec: np.ndarray  # one log return per action index
    next_core: np.ndarray  # position-free part of the next observation
    executed: int  # action value
    time_index: int  # grid slot of the bar the action was filled on

    def next_state(self, action: int) -> np.ndarray:
        return np.concatenate([self.next_core, F.one_hot_position(action)])


def augment(executed: int, bar: Bar, ledger: PortfolioLedger, next_core: np.ndarray,
            state: np.ndarray, time_index: int) -> AugmentedTransition:
    """Rewards for every action at this bar; call before the ledger is mutated."""
    v_prev = ledger.value
    rewards = np.empty(len(ACTIONS))
    for i, a in enumerate(ACTIONS):
        v = mark_to_market(v_prev, ledger.position, a, bar.open, bar.close, ledger.trade_size, ledger.spread)
        if v <= 0:
            raise BankruptcyError(f"portfolio value {v} for action {a} at slot {time_index}")
        rewards[i] = math.log(v / v_prev)
    return AugmentedTransition(state, rewards, next_core, executed, time_index)


class TradingEnv:
    """Gym-style environment over an aligned panel, trading one pair.

    ``reset`` returns the first observation (after feature warm-up); each
    ``step(action)`` returns ``(reward, next_state, done, transition)``.
    """

    def __init__(self, ds: AlignedDataset, pair: str, spread_bp: float = 0.08,
                 initial_cash: float = 100_000.0, trade_size: float = 100_000.0,
                 warmup: int = F.WARMUP, core: np.ndarray | None = None):
        if spread_bp < 0:
            raise ValueError("spread must be non-negative")
        self.ds = ds
        self.pair = normalize_pair(pair)
        self.pair_index = ds.index(self.pair)
        self.spread = spread_bp * bp_unit(self.pair)
        self.initial_cash = float(initial_cash)
        self.trade_size = float(trade_size)
        self.warmup = warmup
        self.core = F.core_features(ds) if core is None else core
        self._bars = ds.data[self.pair_index]
        self.reset()

    @property
    def n_steps(self) -> int:
        return max(0, len(self.ds) - self.warmup)

    @property
    def state_dim(self) -> int:
        return self.core.shape[1] + F.POSITION_DIM

    def bar(self, k: int) -> Bar:
        o, h, l, c, v = self._bars[k]
        return Bar(int(self.ds.grid[k]), float(o), float(h), float(l), float(c), int(v))

    def observation(self, k: int, position: int) -> np.ndarray:
        return np.concatenate([self.core[k], F.one_hot_position(position)])

    def reset(self) -> np.ndarray:
        self.ledger = PortfolioLedger(self.initial_cash, self.trade_size, self.spread)
        self.k = self.warmup - 1
        self.state = self.observation(self.k, 0)
        return self.state

    @property
    def done(self) -> bool:
        return self.k + 1 >= len(self.ds)

    def step(self, action: int):
        if action not in ACTIONS:
            raise ValueError(f"invalid action {action}")
        if self.done:
            raise RuntimeError("episode finished")
        k = self.k + 1
        bar = self.bar(k)
        tr = augment(action, bar, self.ledger, self.core[k], self.state, k)
        v_prev = self.ledger.value
        v = mark_to_market(v_prev, self.ledger.position, action, bar.open, bar.close,
                           self.trade_size, self.spread)
        reward = math.log(v / v_prev)
        self.ledger.book(action, k, bar.open, bar.close)
        self.ledger.value = v
        self.k = k
        self.state = self.observation(k, action)
        return reward, self.state, self.done, tr


def baseline_equity(ds: AlignedDataset, pair: str, mode: str = "buy", spread_bp: float = 0.0,
                    initial_cash: float = 100_000.0, trade_size: float = 100_000.0,
                    warmup: int = F.WARMUP) -> np.ndarray:
    """Equity of a constant +1 ("buy") or -1 ("sell") position over the run's bars.

    Element 0 is the initial cash; element i is the value after step i.
    """
    direction = {"buy": 1, "sell": -1}[mode]
    idx = ds.index(pair)
    o = ds.data[idx, warmup:, 0]
    c = ds.data[idx, warmup:, 3]
    spread = spread_bp * bp_unit(pair)
    out = np.empty(len(o) + 1)
    out[0] = v = initial_cash
    prev = 0
    for i in range(len(o)):
        v = mark_to_market(v, prev, direction, o[i], c[i], trade_size, spread)
        prev = direction
        out[i + 1] = v
    return out
