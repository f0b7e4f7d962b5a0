"""Command-line experiment driver.

Writes one CSV row per federated round::

    round,scenario,optimizer,seed,mean_train_loss,test_accuracy,beta1_effective,elapsed_ms

One round is ``local_epochs`` passes of every label owner over its samples.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import dataio, protocol
from .config import ExperimentConfig, parse_config
from .errors import ConfigurationError, MultiVFLError
from .fedopt import ALGORITHMS

log = logging.getLogger("multivfl")

CSV_COLUMNS = ("round", "scenario", "optimizer", "seed", "mean_train_loss", "test_accuracy",
               "beta1_effective", "elapsed_ms")


def load_datasets(cfg: ExperimentConfig):
    """(train, test) for the configured dataset, test truncated to ``test_samples``."""
    if cfg.dataset == "synthetic":
        full = dataio.synth_dataset(protocol.subseed(cfg.seed, 5), cfg.synthetic_train + cfg.synthetic_test)
        n = cfg.synthetic_train
        train = full.subset(np.arange(n))
        test = full.subset(np.arange(n, len(full)))
        test.ids = [f"test-{i:06d}" for i in range(len(test))]
        train.ids = [f"train-{i:06d}" for i in range(n)]
    else:
        train = dataio.load_split(cfg.data_dir, "train")
        test = dataio.load_split(cfg.data_dir, "test")
    if cfg.test_samples:
        test = test.subset(np.arange(min(cfg.test_samples, len(test))))
    return train, test


def metric_rows(cfg: ExperimentConfig, train, test):
    world = protocol.build_world(train, test, **cfg.world_kwargs())
    for m in protocol.run(world):
        elapsed = round(m.duration_s * 1000) if cfg.timing == "wall" else 0
        yield (m.round, cfg.scenario, cfg.optimizer, cfg.seed, repr(float(m.mean_loss)), repr(float(m.accuracy)),
               repr(float(m.beta1_effective)), elapsed)


def run_experiment(cfg: ExperimentConfig, compare: bool = False, datasets=None) -> int:
    """Run one experiment (or all optimizers with ``compare``) and write the CSV.

    Returns a process exit code; errors are reported on stderr.
    """
    t0 = time.perf_counter()
    try:
        train, test = datasets if datasets is not None else load_datasets(cfg)
        configs = [dataclasses.replace(cfg, optimizer=o) for o in ALGORITHMS] if compare else [cfg]
        out = Path(cfg.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        last = {}
        with open(out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for c in configs:
                for row in metric_rows(c, train, test):
                    writer.writerow(row)
                    fh.flush()
                    last[c.optimizer] = row
    except ConfigurationError as exc:
        print(f"multivfl: configuration error: {exc}", file=sys.stderr)
        return 2
    except (MultiVFLError, OSError) as exc:
        print(f"multivfl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    summary = ", ".join(f"{o} acc={float(r[5]):.4f}" for o, r in last.items())
    print(f"multivfl: {cfg.rounds} rounds, scenario={cfg.scenario}, seed={cfg.seed}: {summary} "
          f"-> {cfg.out} ({time.perf_counter() - t0:.1f}s)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multivfl", description="Run a multi-party vertical federated learning experiment.")
    p.add_argument("--config", metavar="PATH", help="key = value configuration file")
    p.add_argument("--dataset", choices=("mnist", "fashion_mnist", "synthetic"))
    p.add_argument("--data-dir", dest="data_dir", metavar="PATH", help="directory with the IDX files")
    p.add_argument("--scenario", help="iid, 1niid, 2niid, 3niid or 4niid")
    p.add_argument("--optimizer", help="fedavg, fedadam, fedyogi or feddemonadam")
    p.add_argument("--rounds", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="label-owner sessions run concurrently on N threads")
    p.add_argument("--out", metavar="PATH", help="CSV output path")
    p.add_argument("--compare", action="store_true", help="run all four optimizers into one CSV")
    p.add_argument("--set", dest="extra", action="append", default=[], metavar="KEY=VALUE",
                   help="override any configuration key (repeatable)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    overrides = {k: getattr(args, k) for k in ("dataset", "data_dir", "scenario", "optimizer", "rounds", "seed",
                                               "threads", "out")}
    try:
        for item in args.extra:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
            overrides[key.strip()] = value
        cfg = parse_config(args.config, overrides)
    except ConfigurationError as exc:
        print(f"multivfl: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"multivfl: cannot read config: {exc}", file=sys.stderr)
        return 2
    return run_experiment(cfg, compare=args.compare)


if __name__ == "__main__":
    sys.exit(main())
