"""Single-pass online training loop and multi-seed suites."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import checkpoint, nn
from .agent import AgentConfig, DRQNAgent
from .env import BankruptcyError, PortfolioLedger, TradeRecord, TradingEnv
from .marketdata import PAIRS, AlignedDataset, load_dataset, normalize_pair

log = logging.getLogger(__name__)

RUNLOG_COLUMNS = ("step", "time_index", "action", "reward", "value", "loss")


@dataclass
class RunConfig:
    pair: str = "EURUSD"
    dataset: str | None = None
    seed: int = 0
    spread_bp: float = 0.08
    initial_cash: float = 100_000.0
    trade_size: float = 100_000.0
    seq_len: int = 96
    memory_size: int = 480
    gamma: float = 0.99
    tau: float = 0.001
    lr: float = 2.5e-4
    exploration: str = "greedy"
    epsilon: float = 0.1
    clip_norm: float | None = 10.0
    max_steps: int | None = None
    checkpoint_every: int | None = None
    out_dir: str | None = None

    def __post_init__(self):
        self.pair = normalize_pair(self.pair)
        if self.spread_bp < 0:
            raise ValueError("spread_bp must be >= 0")
        if self.pair not in PAIRS:
            raise ValueError(f"pair {self.pair} not in universe {PAIRS}")

    def agent_config(self) -> AgentConfig:
        return AgentConfig(self.seq_len, self.memory_size, self.gamma, self.tau, self.lr,
                           self.exploration, self.epsilon, self.clip_norm)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class RunLog:
    step: list[int] = field(default_factory=list)
    time_index: list[int] = field(default_factory=list)
    action: list[int] = field(default_factory=list)
    reward: list[float] = field(default_factory=list)
    value: list[float] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.step)

    def append(self, step, time_index, action, reward, value, loss=math.nan) -> None:
        self.step.append(step)
        self.time_index.append(time_index)
        self.action.append(action)
        self.reward.append(reward)
        self.value.append(value)
        self.loss.append(loss)

    @property
    def train_events(self) -> int:
        return sum(1 for x in self.loss if not math.isnan(x))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RUNLOG_COLUMNS)
        for row in zip(self.step, self.time_index, self.action, self.reward, self.value, self.loss):
            s, k, a, r, v, l = row
            w.writerow([s, k, a, repr(float(r)), repr(float(v)), "" if math.isnan(l) else repr(float(l))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> RunLog:
        out = cls()
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        if tuple(header) != RUNLOG_COLUMNS:
            raise ValueError(f"unexpected run log header {header}")
        for s, k, a, r, v, l in reader:
            out.append(int(s), int(k), int(a), float(r), float(v), float(l) if l else math.nan)
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def load(cls, path: str | Path) -> RunLog:
        return cls.from_csv(Path(path).read_text())


@dataclass
class RunResult:
    config: RunConfig
    log: RunLog
    trades: list[TradeRecord]
    failed: bool = False
    error: str | None = None
    checkpoint: bytes | None = None

    @property
    def equity(self) -> np.ndarray:
        return np.concatenate([[self.config.initial_cash], self.log.value])


class OnlineTrainer:
    """Acts, stores and learns in one pass over the dataset.

    ``steps`` mirrors the pseudocode counter: it starts at 1 and is bumped
    before each action; a training event fires when replay is full and
    ``steps % seq_len == 0``. The target network is soft-updated every step.
    """

    def __init__(self, config: RunConfig, dataset: AlignedDataset | None = None,
                 core: np.ndarray | None = None):
        self.config = config
        if dataset is None:
            if config.dataset is None:
                raise ValueError("no dataset given")
            dataset = load_dataset(config.dataset)
        self.env = TradingEnv(dataset, config.pair, config.spread_bp, config.initial_cash,
                              config.trade_size, core=core)
        self.agent = DRQNAgent(nn.NetSpec(input_dim=self.env.state_dim), config.agent_config(), config.seed)
        self.state = self.env.reset()
        self.steps = 1
        self.log = RunLog()

    def step(self) -> None:
        self.steps += 1
        a = self.agent.act(self.state)
        r, s_next, _, tr = self.env.step(a)
        self.agent.store(tr)
        loss = math.nan
        if self.agent.memory.full and self.steps % self.config.seq_len == 0:
            loss = self.agent.train()
        self.agent.soft_update()
        self.log.append(self.steps, tr.time_index, a, r, self.env.ledger.value, loss)
        self.state = s_next

    def run(self, max_steps: int | None = None) -> RunResult:
        limit = max_steps if max_steps is not None else self.config.max_steps
        taken = 0
        try:
            while not self.env.done and (limit is None or taken < limit):
                self.step()
                taken += 1
                if self.config.checkpoint_every and self.config.out_dir \
                        and len(self.log) % self.config.checkpoint_every == 0:
                    self.save_checkpoint(Path(self.config.out_dir) / f"checkpoint_{len(self.log):08d}.ckpt")
        except BankruptcyError as exc:
            log.warning("run failed: %s", exc)
            return RunResult(self.config, self.log, list(self.env.ledger.trades), True, str(exc),
                             self.checkpoint_bytes())
        return RunResult(self.config, self.log, list(self.env.ledger.trades), checkpoint=self.checkpoint_bytes())

    # --- checkpointing -------------------------------------------------

    def checkpoint_bytes(self) -> bytes:
        tensors, meta = self._snapshot()
        return checkpoint.dumps(tensors, meta)

    def save_checkpoint(self, path: str | Path) -> None:
        tensors, meta = self._snapshot()
        checkpoint.save(path, tensors, meta)

    def _snapshot(self):
        ag, env = self.agent, self.env
        tensors: dict[str, np.ndarray] = {}
        for name in nn.PARAM_NAMES:
            tensors[f"online/{name}"] = ag.online[name]
            tensors[f"target/{name}"] = ag.target[name]
            tensors[f"adam_m/{name}"] = ag.adam.m[name]
            tensors[f"adam_v/{name}"] = ag.adam.v[name]
        tensors["acting/h"], tensors["acting/c"] = ag.acting_state
        mem = ag.memory.ordered()
        D, C = env.state_dim, env.state_dim - 3
        tensors["memory/state"] = np.array([t.state for t in mem]).reshape(-1, D)
        tensors["memory/reward"] = np.array([t.reward_vec for t in mem]).reshape(-1, 3)
        tensors["memory/next_core"] = np.array([t.next_core for t in mem]).reshape(-1, C)
        tensors["memory/executed"] = np.array([t.executed for t in mem], dtype=np.int64)
        tensors["memory/time_index"] = np.array([t.time_index for t in mem], dtype=np.int64)
        tensors["env/state"] = self.state
        tensors["log/step"] = np.array(self.log.step, dtype=np.int64)
        tensors["log/time_index"] = np.array(self.log.time_index, dtype=np.int64)
        tensors["log/action"] = np.array(self.log.action, dtype=np.int64)
        tensors["log/reward"] = np.array(self.log.reward, dtype=np.float64)
        tensors["log/value"] = np.array(self.log.value, dtype=np.float64)
        tensors["log/loss"] = np.array(self.log.loss, dtype=np.float64)
        led = env.ledger
        meta = {
            "config": self.config.to_dict(),
            "steps": self.steps,
            "adam_t": ag.adam.t,
            "train_events": ag.train_events,
            "rng": ag.rng.bit_generator.state,
            "env": {"k": env.k, "value": led.value, "position": led.position,
                    "trades": [dataclasses.asdict(t) for t in led.trades],
                    "open_trade": dataclasses.asdict(led.open_trade) if led.open_trade else None},
        }
        return tensors, meta

    @classmethod
    def from_checkpoint(cls, path_or_bytes, dataset: AlignedDataset | None = None,
                        core: np.ndarray | None = None) -> OnlineTrainer:
        from .env import AugmentedTransition

        if isinstance(path_or_bytes, (bytes, bytearray)):
            tensors, meta = checkpoint.loads(bytes(path_or_bytes))
        else:
            tensors, meta = checkpoint.load(path_or_bytes)
        cfg = meta["config"]
        self = cls(RunConfig(**cfg), dataset, core)
        ag = self.agent
        for name in nn.PARAM_NAMES:
            ag.online[name][...] = tensors[f"online/{name}"]
            ag.target[name][...] = tensors[f"target/{name}"]
            ag.adam.m[name][...] = tensors[f"adam_m/{name}"]
            ag.adam.v[name][...] = tensors[f"adam_v/{name}"]
        ag.adam.t = meta["adam_t"]
        ag.train_events = meta["train_events"]
        ag.rng.bit_generator.state = meta["rng"]
        ag.acting_state = (tensors["acting/h"], tensors["acting/c"])
        for s, r, c, a, k in zip(tensors["memory/state"], tensors["memory/reward"], tensors["memory/next_core"],
                                 tensors["memory/executed"], tensors["memory/time_index"]):
            ag.memory.store(AugmentedTransition(s, r, c, int(a), int(k)))
        e = meta["env"]
        self.env.k = e["k"]
        self.env.ledger = PortfolioLedger(e["value"], self.env.trade_size, self.env.spread, e["position"],
                                          [TradeRecord(**t) for t in e["trades"]],
                                          TradeRecord(**e["open_trade"]) if e["open_trade"] else None)
        self.state = tensors["env/state"]
        self.env.state = self.state
        self.steps = meta["steps"]
        for row in zip(*(tensors[f"log/{c}"] for c in RUNLOG_COLUMNS)):
            s, k, a, r, v, l = row
            self.log.append(int(s), int(k), int(a), float(r), float(v), float(l))
        return self


def run(config: RunConfig, dataset: AlignedDataset | None = None, core: np.ndarray | None = None) -> RunResult:
    return OnlineTrainer(config, dataset, core).run()


def _run_safe(args) -> RunResult:
    config, dataset, core = args
    try:
        return run(config, dataset, core)
    except Exception as exc:  # noqa: BLE001 - suite keeps going
        log.exception("run %s seed %d crashed", config.pair, config.seed)
        return RunResult(config, RunLog(), [], True, repr(exc))


@dataclass
class SuiteResult:
    results: list[RunResult]
    mean: np.ndarray
    std: np.ndarray

    @property
    def curves(self) -> list[np.ndarray]:
        return [r.equity for r in self.results if not r.failed]


def aggregate(curves: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Per-time mean and population std over equal-length equity curves (truncated to the shortest)."""
    if not curves:
        return np.zeros(0), np.zeros(0)
    n = min(len(c) for c in curves)
    ref = curves[0][:n]
    # deviations from the first curve: identical runs give exactly zero spread
    dev = np.stack([c[:n] - ref for c in curves])
    return ref + dev.mean(axis=0), dev.std(axis=0)


def run_suite(configs: list[RunConfig], repeats: int = 5, dataset: AlignedDataset | None = None,
              seeds: list[int] | None = None, workers: int = 1) -> list[SuiteResult]:
    """Run every config ``repeats`` times with distinct seeds (``config.seed + i`` unless given)."""
    out = []
    for cfg in configs:
        run_seeds = seeds if seeds is not None else [cfg.seed + i for i in range(repeats)]
        run_seeds = run_seeds[:repeats]
        cfgs = [dataclasses.replace(cfg, seed=s) for s in run_seeds]
        if not cfgs:
            out.append(SuiteResult([], np.zeros(0), np.zeros(0)))
            continue
        ds = dataset if dataset is not None else load_dataset(cfg.dataset)
        core = None
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                results = list(pool.map(_run_safe, [(c, ds, core) for c in cfgs]))
        else:
            from .features import core_features

            core = core_features(ds)
            results = [_run_safe((c, ds, core)) for c in cfgs]
        mean, std = aggregate([r.equity for r in results if not r.failed])
        out.append(SuiteResult(results, mean, std))
    return out
