"""Command-line interface: ``bcpnn <subcommand> [flags]``.

Exit status is 0 on success, 2 for usage or configuration errors and 1 for
anything else. Failures also print one JSON line on stderr::

    {"error": "TruncatedFileError", "message": "...", "exit": 1}
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config
from .errors import BcpnnError, ConfigurationError
from .evaluation import MetricsReport, evaluate, validation_accuracy
from .io import (
    load_checkpoint,
    read_codes,
    read_labels,
    save_checkpoint,
    write_codes,
    write_csv,
    write_labels,
    write_pgm,
)
from .oracle import run_oracle
from .pipeline import encode_images, input_grid, load_split
from .receptive import export_receptive_fields
from .sweep import SWEEP_FIELDS, sweep
from .trainer import TrainRun, build_network, train_unsupervised

log = logging.getLogger("bcpnn")

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2
METRIC_FIELDS = ["run_id", "accuracy", "s_activity", "s_usage", "b_inp", "b_hid", "timestamp"]
SWAP_FIELDS = ["iteration", "hypercolumn", "swaps", "mean_active_usage", "mean_silent_usage"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# --------------------------------------------------------------------------
# encoded datasets
# --------------------------------------------------------------------------


class Encoded:
    """Stored codes and labels for the train and (optional) test split."""

    def __init__(self, train, train_labels, test, test_labels, grid, raw_test=None):
        self.train, self.train_labels = train, train_labels
        self.test, self.test_labels = test, test_labels
        self.grid = grid
        self.raw_test = raw_test


def encode_from_config(cfg: RunConfig) -> Encoded:
    train = load_split(cfg.data, "train")
    if train is None:
        raise ConfigurationError("[data] train_images / train_labels are required")
    test = load_split(cfg.data, "test")
    codes, gmm = encode_images(train.images, cfg.encoder, seed=cfg.seed_encoder)
    grid = input_grid(train.images, cfg.encoder)
    if test is None:
        return Encoded(codes, train.labels, None, None, grid)
    tcodes, _ = encode_images(test.images, cfg.encoder, gmm=gmm, seed=cfg.seed_encoder)
    raw = test.images.reshape(len(test.images), -1).astype(np.float64) / 255.0
    return Encoded(codes, train.labels, tcodes, test.labels, grid, raw)


def save_cache(enc: Encoded, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_codes(out / "train.bpop", enc.train)
    write_labels(out / "train.labels", enc.train_labels)
    if enc.test is not None:
        write_codes(out / "test.bpop", enc.test)
        write_labels(out / "test.labels", enc.test_labels)
        np.save(out / "test_raw.npy", enc.raw_test)
    meta = configparser.ConfigParser()
    meta["grid"] = {"rows": str(enc.grid[0]), "cols": str(enc.grid[1]), "channels": str(enc.grid[2])}
    with open(out / "cache.ini", "w", encoding="utf-8") as f:
        meta.write(f)


def load_cache(path: Path) -> Encoded:
    path = Path(path)
    meta = configparser.ConfigParser()
    if not meta.read(path / "cache.ini"):
        raise ConfigurationError(f"{path} is not an encoded cache (cache.ini missing)")
    grid = tuple(int(meta["grid"][k]) for k in ("rows", "cols", "channels"))
    train, train_labels = read_codes(path / "train.bpop"), read_labels(path / "train.labels")
    if (path / "test.bpop").exists():
        raw = np.load(path / "test_raw.npy").astype(np.float64) if (path / "test_raw.npy").exists() else None
        return Encoded(train, train_labels, read_codes(path / "test.bpop"), read_labels(path / "test.labels"), grid, raw)
    return Encoded(train, train_labels, None, None, grid)


def _encoded(args, cfg: RunConfig) -> Encoded:
    return load_cache(args.from_cache) if getattr(args, "from_cache", None) else encode_from_config(cfg)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _out_dir(args, cfg: RunConfig | None) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return cfg.resolved_output_dir if cfg is not None else Path(".")


def _report(state, enc: Encoded, cfg: RunConfig, swap_counts) -> MetricsReport:
    return evaluate(
        state, enc.train, enc.train_labels, enc.test, enc.test_labels, cfg.probe, cfg.seed_probe,
        raw_test=enc.raw_test, swap_counts=swap_counts,
    )


def _write_metrics(out: Path, report: MetricsReport, run_id: str) -> None:
    row = report.row(run_id)
    row["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    write_csv(out / "metrics.csv", [row], METRIC_FIELDS)
    write_pgm(out / "similarity_inp.pgm", np.clip(report.similarity_inp, 0.0, 1.0))
    write_pgm(out / "similarity_hid.pgm", np.clip(report.similarity_hid, 0.0, 1.0))
    print(
        f"accuracy={report.accuracy:.4f} s_activity={report.s_activity:.4f} s_usage={report.s_usage:.4f} "
        f"b_inp={report.b_inp:.4f} b_hid={report.b_hid:.4f}"
    )


def cmd_encode(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    enc = encode_from_config(cfg)
    save_cache(enc, out)
    print(f"encoded {len(enc.train)} train samples to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    enc = _encoded(args, cfg)
    tcfg = cfg.training
    state = build_network(tcfg, enc.train.shape[1], enc.train.shape[2], enc.grid, enc.train)
    run = TrainRun(tcfg, enc.train, state)
    curve = []
    hook = None
    if args.curve:

        def hook(it, st):
            acc = validation_accuracy(st, enc.train, enc.train_labels, cfg.probe, cfg.seed_probe)
            curve.append({"iteration": it, "validation_accuracy": acc})

    train_unsupervised(run, engine=cfg.engine, on_checkpoint=hook)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out / "checkpoint.bcpn", run.state)
    write_csv(out / "swaps.csv", run.swap_log, SWAP_FIELDS)
    write_csv(
        out / "epoch_swaps.csv",
        [{"epoch": e + 1, "swaps": s} for e, s in enumerate(run.epoch_swaps)],
        ["epoch", "swaps"],
    )
    if curve:
        write_csv(out / "convergence.csv", curve, ["iteration", "validation_accuracy"])
    print(f"trained {tcfg.epochs} epochs ({run.iteration} iterations, {run.structural_steps} structural steps)")
    if enc.test is not None and not args.no_eval:
        _write_metrics(out, _report(run.state, enc, cfg, run.epoch_swaps), cfg.run_id)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    state = load_checkpoint(args.checkpoint)
    enc = _encoded(args, cfg)
    if enc.test is None:
        raise ConfigurationError("evaluation needs a test split in [data] or the cache")
    out.mkdir(parents=True, exist_ok=True)
    _write_metrics(out, _report(state, enc, cfg, None), cfg.run_id)
    return EXIT_OK


def _parse_grid(text: str | None):
    if text is None:
        return None
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise UsageError(f"--grid expects ROWS,COLS,CHANNELS, got {text!r}") from None
    if len(vals) != 3:
        raise UsageError(f"--grid expects ROWS,COLS,CHANNELS, got {text!r}")
    return vals


def cmd_export_rf(args) -> int:
    state = load_checkpoint(args.checkpoint)
    grid = _parse_grid(args.grid)
    dataset = None
    if args.from_cache:
        enc = load_cache(args.from_cache)
        grid = grid or enc.grid
        dataset = enc.test if enc.test is not None else enc.train
    out = Path(args.out) if args.out else Path(".")
    info = export_receptive_fields(state, out, grid=grid, dataset=dataset, threshold=args.threshold)
    print(f"wrote {info['count']} receptive fields to {out} (mean pixel spread {info['spread']:.3f})")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    enc = _encoded(args, cfg)
    if enc.test is None:
        raise ConfigurationError("a sweep needs a test split")
    g = cfg.sweep
    rows, skipped = sweep(
        list(g.n_hid), list(g.m_hid), list(g.fanin), enc.train, enc.train_labels, enc.test, enc.test_labels,
        base=cfg.training, repeats=g.repeats, probe_config=cfg.probe, seed_probe=cfg.seed_probe,
        grid=enc.grid, engine=cfg.engine,
    )
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sweep.csv", rows, SWEEP_FIELDS)
    if skipped:
        write_csv(out / "sweep_skipped.csv", skipped, ["n_hid", "m_hid", "fanin", "reason"])
    for r in rows:
        print(f"n_hid={r['n_hid']} m_hid={r['m_hid']} fanin={r['fanin']} error={r['error']}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    report = run_oracle(
        n_samples=args.samples, n_attributes=args.attributes, n_values=args.values, k=args.clusters,
        seed=args.seed, epochs=args.epochs,
    )
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bcpnn", description="Feedforward BCPNN representation learning")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("encode", help="encode a dataset into a binary cache")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="cache directory (default: output dir)")
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("train", help="train a network; writes checkpoint, swap log and metrics")
    s.add_argument("--config", required=True)
    s.add_argument("--from-cache", help="encoded cache directory from `encode`")
    s.add_argument("--out")
    s.add_argument("--no-eval", action="store_true", help="skip the probe evaluation")
    s.add_argument(
        "--curve", action="store_true", help="probe a 10%% validation hold-out at log-spaced iterations"
    )
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint; writes metrics.csv")
    s.add_argument("--config", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--from-cache")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("export-rf", help="write receptive-field PGM images")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out")
    s.add_argument("--grid", help="ROWS,COLS,CHANNELS (inferred for square grids)")
    s.add_argument("--from-cache", help="average cached samples instead of traces")
    s.add_argument("--threshold", type=float, default=0.9)
    s.set_defaults(func=cmd_export_rf)

    s = sub.add_parser("sweep", help="architecture sweep; writes sweep.csv")
    s.add_argument("--config", required=True)
    s.add_argument("--from-cache")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("oracle", help="compare a one-hypercolumn network with batch EM on toy data")
    s.add_argument("--samples", type=int, default=300)
    s.add_argument("--attributes", type=int, default=8)
    s.add_argument("--values", type=int, default=4)
    s.add_argument("--clusters", type=int, default=3)
    s.add_argument("--epochs", type=int, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="also write the JSON report here")
    s.set_defaults(func=cmd_oracle)
    return p


def _fail(exc: BaseException, code: int) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit": code}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        return _fail(exc, EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigurationError) as exc:
        return _fail(exc, EXIT_USAGE)
    except (BcpnnError, OSError, ValueError) as exc:
        return _fail(exc, EXIT_ERROR)


if __name__ == "__main__":
    sys.exit(main())
