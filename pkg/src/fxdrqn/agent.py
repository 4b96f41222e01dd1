"""Recurrent Q-learning agent with action augmentation.

Every stored transition carries a reward for each of the three actions and
the position-free part of the next observation, so the loss regresses all
three Q-values at every step of a sampled sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .env import ACTIONS, AugmentedTransition, action_value
from .features import one_hot_position


class NotReady(Exception):
    """Raised when sampling from a replay memory that is not yet full."""


@dataclass
class AgentConfig:
    seq_len: int = 96
    memory_size: int = 480
    gamma: float = 0.99
    tau: float = 0.001
    lr: float = 2.5e-4
    exploration: str = "greedy"  # or "epsilon"
    epsilon: float = 0.1
    clip_norm: float | None = 10.0

    def __post_init__(self):
        if not 0 < self.seq_len <= self.memory_size:
            raise ValueError("need 0 < seq_len <= memory_size")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must be in (0, 1]")
        if self.exploration not in ("greedy", "epsilon"):
            raise ValueError(f"unknown exploration mode {self.exploration!r}")


class ReplayMemory:
    """Fixed-capacity ring of transitions kept in environment-time order."""

    def __init__(self, capacity: int = 480):
        self.capacity = capacity
        self._buf: list[AugmentedTransition | None] = [None] * capacity
        self._next = 0
        self._size = 0
        self._last_time: int | None = None

    def __len__(self) -> int:
        return self._size

    @property
    def full(self) -> bool:
        return self._size == self.capacity

    def store(self, tr: AugmentedTransition) -> None:
        if self._last_time is not None and tr.time_index <= self._last_time:
            raise ValueError(f"out-of-order transition: {tr.time_index} after {self._last_time}")
        self._last_time = tr.time_index
        self._buf[self._next] = tr
        self._next = (self._next + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def ordered(self) -> list[AugmentedTransition]:
        """Contents, oldest first."""
        if not self.full:
            return self._buf[: self._size]
        return self._buf[self._next:] + self._buf[: self._next]

    def window(self, start: int, length: int) -> list[AugmentedTransition]:
        """``length`` consecutive transitions starting ``start`` places after the oldest."""
        if start < 0 or start + length > self._size:
            raise IndexError("window out of range")
        base = self._next if self.full else 0
        return [self._buf[(base + start + j) % self.capacity] for j in range(length)]

    def sample_sequence(self, length: int, rng: np.random.Generator) -> list[AugmentedTransition]:
        start = self.sample_start(length, rng)
        return self.window(start, length)

    def sample_start(self, length: int, rng: np.random.Generator) -> int:
        if not self.full:
            raise NotReady(f"memory holds {self._size}/{self.capacity}")
        return int(rng.integers(0, self.capacity - length + 1))


def greedy_index(q: np.ndarray) -> int:
    """argmax with ties going to the flat action, then the lowest index."""
    q = np.asarray(q)
    best = q.max()
    flat = ACTIONS.index(0)
    if q[flat] == best:
        return flat
    return int(np.flatnonzero(q == best)[0])


def soft_update(target, online, tau: float) -> None:
    for k, t in target.items():
        t *= 1.0 - tau
        t += tau * online[k]


def _stack(seq: list[AugmentedTransition]):
    states = np.stack([tr.state for tr in seq])
    rewards = np.stack([tr.reward_vec for tr in seq])
    cores = np.stack([tr.next_core for tr in seq])
    return states, rewards, cores


def _next_state_inputs(cores: np.ndarray) -> np.ndarray:
    """Rows ordered (t, a): next_core_t concatenated with one_hot(a)."""
    T = len(cores)
    hot = np.stack([one_hot_position(a) for a in ACTIONS])
    return np.concatenate([np.repeat(cores, len(ACTIONS), axis=0), np.tile(hot, (T, 1))], axis=1)


def compute_targets(seq, online, target, gamma: float, online_cache=None) -> np.ndarray:
    """Double-Q targets (T, 3) for every action at every step of ``seq``.

    Each network is rolled over the executed states with its own zero-started
    recurrent state; the three counterfactual next states at step t are
    evaluated one step ahead of the state reached after step t.
    """
    states, rewards, cores = _stack(seq)
    A = len(ACTIONS)
    nxt = _next_state_inputs(cores)
    cache_on = online_cache if online_cache is not None else nn.forward_sequence(online, states)[1]
    _, cache_tg, _ = nn.forward_sequence(target, states)
    q_on = nn.q_from_states(online, nxt, np.repeat(cache_on["h"], A, 0), np.repeat(cache_on["c"], A, 0))
    q_tg = nn.q_from_states(target, nxt, np.repeat(cache_tg["h"], A, 0), np.repeat(cache_tg["c"], A, 0))
    best = np.array([greedy_index(row) for row in q_on])
    boot = q_tg[np.arange(len(best)), best].reshape(len(seq), A)
    return rewards + gamma * boot


def compute_loss_and_grads(seq, online, target, gamma: float):
    """Mean squared action-augmentation error over all T x 3 entries and its gradient w.r.t. ``online``."""
    states = np.stack([tr.state for tr in seq])
    q, cache, _ = nn.forward_sequence(online, states)
    y = compute_targets(seq, online, target, gamma, online_cache=cache)
    err = q - y
    loss = float(np.mean(err ** 2))
    if not np.isfinite(loss):
        raise nn.NumericalFault("non-finite loss")
    dq = 2.0 * err / err.size
    return loss, nn.backward_sequence(online, cache, dq)


class DRQNAgent:
    def __init__(self, spec: nn.NetSpec, config: AgentConfig = AgentConfig(), seed: int = 0):
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.online = nn.init_network(self.rng, spec)
        self.target = nn.copy_params(self.online)
        self.adam = nn.Adam(self.online, lr=config.lr)
        self.memory = ReplayMemory(config.memory_size)
        self.acting_state = nn.zero_state(self.online)
        self.train_events = 0

    def q_values(self, state: np.ndarray) -> np.ndarray:
        q, _, _ = nn.forward_step(self.online, self.acting_state, state)
        return q

    def act(self, state: np.ndarray) -> int:
        """Advance the persistent acting state on ``state`` and return an action value."""
        q, self.acting_state, _ = nn.forward_step(self.online, self.acting_state, state)
        idx = greedy_index(q)
        if self.config.exploration == "epsilon" and self.rng.random() < self.config.epsilon:
            idx = int(self.rng.integers(0, len(ACTIONS)))
        return action_value(idx)

    def store(self, tr: AugmentedTransition) -> None:
        self.memory.store(tr)

    def train(self) -> float:
        """One gradient step on a sampled sequence; raises ``NotReady`` until memory is full."""
        seq = self.memory.sample_sequence(self.config.seq_len, self.rng)
        loss, grads = compute_loss_and_grads(seq, self.online, self.target, self.config.gamma)
        if self.config.clip_norm is not None:
            nn.clip_by_global_norm(grads, self.config.clip_norm)
        self.adam.step(self.online, grads)
        self.train_events += 1
        return loss

    def soft_update(self) -> None:
        soft_update(self.target, self.online, self.config.tau)
