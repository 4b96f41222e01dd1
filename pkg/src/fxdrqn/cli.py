"""Command line entry point: ``fxdrqn {ingest,train,suite,report}``.

Any ``train``/``suite`` flag can also come from a JSON or YAML file given
with ``--config``; flags on the command line win.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import analytics, marketdata
from .env import TradeRecord, baseline_equity
from .trainer import RunConfig, RunLog, RunResult, run, run_suite

DATA_DIR_ENV = "FXDRQN_DATA_DIR"
log = logging.getLogger("fxdrqn")


def data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    text = Path(path).read_text()
    if path.endswith((".yaml", ".yml")):
        import yaml

        return yaml.safe_load(text) or {}
    return json.loads(text)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    # defaults are None so we can tell which flags were given explicitly
    p.add_argument("--config", help="JSON/YAML file with RunConfig fields")
    p.add_argument("--pair")
    p.add_argument("--dataset", help="dataset cache built by 'ingest'")
    p.add_argument("--seed", type=int)
    p.add_argument("--spread-bp", type=float, dest="spread_bp")
    p.add_argument("--initial-cash", type=float, dest="initial_cash")
    p.add_argument("--trade-size", type=float, dest="trade_size")
    p.add_argument("--seq-len", type=int, dest="seq_len")
    p.add_argument("--memory-size", type=int, dest="memory_size")
    p.add_argument("--gamma", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--exploration", choices=["greedy", "epsilon"])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--clip-norm", type=float, dest="clip_norm")
    p.add_argument("--max-steps", type=int, dest="max_steps")
    p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    p.add_argument("--out", default=None, help="output root (default: $FXDRQN_DATA_DIR/runs)")


def build_config(args: argparse.Namespace) -> RunConfig:
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    values = {k: v for k, v in load_config_file(args.config).items() if k in fields}
    for name in fields:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if "dataset" not in values:
        values["dataset"] = str(data_dir() / "dataset.npz")
    return RunConfig(**values)


def run_dir(root: str | None, cfg: RunConfig, tag: str = "") -> Path:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
    base = Path(root) if root else data_dir() / "runs"
    d = base / f"{stamp}_{cfg.pair}_seed{cfg.seed}{tag}"
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_trades(path: Path, trades: list[TradeRecord]) -> None:
    names = [f.name for f in dataclasses.fields(TradeRecord)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for t in trades:
            w.writerow([repr(v) if isinstance(v, float) else v for v in dataclasses.astuple(t)])


def read_trades(path: Path) -> list[TradeRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [TradeRecord(int(r["direction"]), int(r["entry_time"]), float(r["entry_price"]),
                        int(r["exit_time"]), float(r["exit_price"]), float(r["pnl"])) for r in rows]


def baselines(ds: marketdata.AlignedDataset, cfg: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    kw = dict(spread_bp=cfg.spread_bp, initial_cash=cfg.initial_cash, trade_size=cfg.trade_size)
    return baseline_equity(ds, cfg.pair, "buy", **kw), baseline_equity(ds, cfg.pair, "sell", **kw)


def report_run(out: Path, cfg: RunConfig, runlog: RunLog, trades: list[TradeRecord],
               ds: marketdata.AlignedDataset) -> analytics.MetricsReport:
    buy, sell = baselines(ds, cfg)
    rep = analytics.compute_report(runlog.reward, runlog.value, cfg.initial_cash, trades, buy, sell)
    _, base = analytics.pick_baseline(buy, sell)
    equity = np.concatenate([[cfg.initial_cash], runlog.value])
    analytics.emit_report(rep, equity, base[: len(equity)], out / "summary.txt", out / "equity.csv")
    return rep


def save_result(out: Path, res: RunResult, ds: marketdata.AlignedDataset) -> analytics.MetricsReport:
    (out / "config.json").write_text(json.dumps(res.config.to_dict(), indent=2, sort_keys=True))
    res.log.save(out / "runlog.csv")
    write_trades(out / "trades.csv", res.trades)
    if res.checkpoint is not None:
        (out / "final.ckpt").write_bytes(res.checkpoint)
    if res.failed:
        (out / "FAILED").write_text(res.error or "failed\n")
    return report_run(out, res.config, res.log, res.trades, ds)


def cmd_ingest(args) -> int:
    out = Path(args.output) if args.output else data_dir() / "dataset.npz"
    if out.exists() and not args.rebuild:
        log.info("cache %s exists; pass --rebuild to regenerate", out)
        return 0
    if args.synthetic == "sine":
        ds = marketdata.synthetic_sinusoid(args.bars, period=args.period, amplitude=args.amplitude)
    elif args.synthetic == "walk":
        ds = marketdata.synthetic_random_walk(args.bars, seed=args.seed)
    else:
        src = Path(args.input) if args.input else data_dir() / "ticks"
        ds = marketdata.ingest_directory(src)
    marketdata.save_dataset(ds, out)
    print(f"wrote {out}: {len(ds.pairs)} pairs x {len(ds)} bars")
    return 0


def cmd_train(args) -> int:
    cfg = build_config(args)
    ds = marketdata.load_dataset(cfg.dataset)
    out = run_dir(args.out, cfg)
    cfg = dataclasses.replace(cfg, out_dir=str(out))
    res = run(cfg, ds)
    rep = save_result(out, res, ds)
    print(analytics.format_summary(rep, title=f"{cfg.pair} seed {cfg.seed} -> {out}"))
    return 1 if res.failed else 0


def cmd_suite(args) -> int:
    base = build_config(args)
    spreads = args.spreads or [base.spread_bp]
    modes = args.modes or [base.exploration]
    pairs = args.pairs or [base.pair]
    configs = [dataclasses.replace(base, pair=marketdata.normalize_pair(p), spread_bp=s, exploration=m)
               for p in pairs for s in spreads for m in modes]
    ds = marketdata.load_dataset(base.dataset)
    for cfg, suite in zip(configs, run_suite(configs, args.repeats, ds, workers=args.workers)):
        tag = f"_spread{cfg.spread_bp}_{cfg.exploration}_suite"
        out = run_dir(args.out, cfg, tag)
        for i, res in enumerate(suite.results):
            sub = out / f"run{i}_seed{res.config.seed}"
            sub.mkdir()
            save_result(sub, res, ds)
        buy, sell = baselines(ds, cfg)
        _, base_eq = analytics.pick_baseline(buy, sell)
        analytics.emit_report(None, None, base_eq, None, out / "equity_suite.csv",
                              suite=(suite.mean, suite.std, suite.curves))
        failed = sum(r.failed for r in suite.results)
        print(f"{cfg.pair} spread={cfg.spread_bp} mode={cfg.exploration}: "
              f"{len(suite.results)} runs, {failed} failed -> {out}")
    return 0


def cmd_report(args) -> int:
    out = Path(args.run_dir)
    cfg = RunConfig(**json.loads((out / "config.json").read_text()))
    ds = marketdata.load_dataset(args.dataset or cfg.dataset)
    rep = report_run(out, cfg, RunLog.load(out / "runlog.csv"), read_trades(out / "trades.csv"), ds)
    print(analytics.format_summary(rep, title=str(out)))
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fxdrqn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build the aligned dataset cache")
    p.add_argument("--input", help="directory of tick files (default: $FXDRQN_DATA_DIR/ticks)")
    p.add_argument("--output", help="cache path (default: $FXDRQN_DATA_DIR/dataset.npz)")
    p.add_argument("--rebuild", action="store_true", help="overwrite an existing cache")
    p.add_argument("--synthetic", choices=["sine", "walk"], help="generate synthetic bars instead")
    p.add_argument("--bars", type=int, default=20_097)
    p.add_argument("--period", type=float, default=192.0)
    p.add_argument("--amplitude", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="one online run")
    _add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("suite", help="repeated runs and sweeps")
    _add_run_flags(p)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--spreads", type=float, nargs="*", help="spread sweep in bp")
    p.add_argument("--modes", nargs="*", choices=["greedy", "epsilon"])
    p.add_argument("--pairs", nargs="*")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("report", help="recompute analytics for a finished run directory")
    p.add_argument("run_dir")
    p.add_argument("--dataset", help="override dataset path recorded in config.json")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
