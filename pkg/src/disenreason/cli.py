"""Command-line surface: data generation, training, evaluation, analysis,
and the invariant selftest, all reproducible from one seed.

Configs are line-oriented ``key = value`` text; command-line flags override
file values, and every run echoes its fully resolved config to the output
directory so the run can be reproduced from that file alone.

Exit codes: 0 success, 1 usage/config error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from .data import (
    DatasetFormatError,
    GeneratorConfig,
    generate_synthetic,
    prepare_sequence,
    read_dataset,
    read_ground_truth,
    split_train_test,
    write_dataset,
    write_ground_truth,
)
from .estimator import DisenReasonRecommender
from .frequency import band_edges, to_frequency
from .graph import lookup_sequence
from .metrics import write_count_report_csv, write_metrics_csv
from .model import Hyper
from . import selftest

__all__ = ["RunConfig", "ConfigError", "parse_config", "execute", "main"]

DATASET_FILE = "dataset.txt"
GROUND_TRUTH_FILE = "ground_truth.jsonl"
CHECKPOINT_FILE = "checkpoint.npz"
HISTORY_FILE = "loss_history.csv"
METRICS_FILE = "metrics.csv"
COUNT_REPORT_FILE = "count_report.csv"
SPECTRUM_FILE = "spectrum.csv"
TRACES_FILE = "traces.csv"
RESOLVED_CONFIG_FILE = "resolved_config.txt"


class ConfigError(ValueError):
    """Bad config file, unknown key, or invalid field value."""


@dataclass
class RunConfig:
    """Fully resolved run configuration: hyperparameters, paths, protocol
    knobs, and generator settings."""

    # model hyperparameters
    embedding_dim: int = 64
    layers: int = 3
    bandwidth: int = 5
    alpha: float = 0.5
    beta: float = 1.0
    learning_rate: float = 1e-3
    t_max: int = 8
    max_len: int = 50
    epochs: int = 20
    batch_size: int = 64
    patience: int = 5
    seed: int = 0
    include_layer0: bool = False
    refresh_per_batch: bool = False
    gate_pooling: str = "mean"
    gate_scale: float = 1.0
    # paths
    data: str = ""
    ground_truth: str = ""
    checkpoint: str = ""
    out: str = "."
    # evaluation protocol
    split_ratio: float = 0.8
    # synthetic generator
    n_items: int = 200
    n_accounts: int = 500
    k_max: int = 3
    pool_size: int = 8
    mean_len: float = 15.0
    sequences_per_account: int = 4
    rhythm_periods: tuple[int, ...] = (1, 2, 4, 8)
    # analysis dumps
    dump_spectrum: bool = False
    dump_traces: bool = False
    spectrum_account: int = 0

    def to_hyper(self) -> Hyper:
        return Hyper(
            embedding_dim=self.embedding_dim,
            layers=self.layers,
            bandwidth=self.bandwidth,
            alpha=self.alpha,
            beta=self.beta,
            learning_rate=self.learning_rate,
            t_max=self.t_max,
            max_len=self.max_len,
            epochs=self.epochs,
            batch_size=self.batch_size,
            patience=self.patience,
            seed=self.seed,
            include_layer0=self.include_layer0,
            refresh_per_batch=self.refresh_per_batch,
            gate_pooling=self.gate_pooling,
            gate_scale=self.gate_scale,
        )

    def to_generator(self) -> GeneratorConfig:
        return GeneratorConfig(
            n_items=self.n_items,
            n_accounts=self.n_accounts,
            k_max=self.k_max,
            pool_size=self.pool_size,
            rhythm_periods=self.rhythm_periods,
            mean_len=self.mean_len,
            sequences_per_account=self.sequences_per_account,
            seed=self.seed,
        )

    def validate(self) -> None:
        try:
            self.to_hyper().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if not (0.0 < self.split_ratio < 1.0):
            raise ConfigError("split_ratio must lie strictly between 0 and 1")


def _parse_value(name: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            lowered = raw.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        # tuple[int, ...]: comma-separated positive ints
        return tuple(int(tok) for tok in raw.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"field {name!r}: {exc}") from exc


def parse_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional file plus explicit overrides.

    File lines are ``key = value``; blank lines and '#' comments are
    skipped. Unknown keys are rejected by name; overrides win over file
    values; defaults fill the remainder.
    """
    config = RunConfig()
    field_types = {f.name: f.type for f in fields(RunConfig)}
    kinds = {
        name: (bool if "bool" in str(t) else
               int if str(t) == "int" else
               float if str(t) == "float" else
               str if str(t) == "str" else tuple)
        for name, t in field_types.items()
    }
    if path:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                lines = fh.read().splitlines()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, _, raw = stripped.partition("=")
            key = key.strip()
            if key not in kinds:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            setattr(config, key, _parse_value(key, raw, kinds[key]))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in kinds:
            raise ConfigError(f"unknown override key {key!r}")
        setattr(config, key, value)
    config.validate()
    return config


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_resolved_config(config: RunConfig, out_dir: str) -> None:
    path = os.path.join(out_dir, RESOLVED_CONFIG_FILE)
    with open(path, "w", encoding="utf-8") as fh:
        for f in sorted(fields(RunConfig), key=lambda f: f.name):
            fh.write(f"{f.name} = {_format_value(getattr(config, f.name))}\n")


def _ensure_out(config: RunConfig) -> None:
    os.makedirs(config.out, exist_ok=True)
    write_resolved_config(config, config.out)


def _require(config: RunConfig, field_name: str) -> str:
    value = getattr(config, field_name)
    if not value:
        raise ConfigError(f"command requires {field_name!r} to be set")
    return value


def _cmd_gen_data(config: RunConfig) -> int:
    _ensure_out(config)
    dataset, truth = generate_synthetic(config.to_generator())
    write_dataset(dataset, os.path.join(config.out, DATASET_FILE))
    write_ground_truth(truth, os.path.join(config.out, GROUND_TRUTH_FILE))
    mean_len = np.mean([len(s.items) for s in dataset.sequences])
    print(
        f"generated {len(dataset.sequences)} sequences over "
        f"{dataset.n_accounts} accounts and {dataset.n_items} items "
        f"(mean input length {mean_len:.2f}) -> {config.out}"
    )
    return 0


def _fit_estimator(config: RunConfig):
    dataset = read_dataset(_require(config, "data"))
    train_ds, test_ds = split_train_test(dataset, config.split_ratio, config.seed)
    est = DisenReasonRecommender(**vars(config.to_hyper()))
    est.fit(train_ds)
    return est, train_ds, test_ds


def _cmd_train(config: RunConfig) -> int:
    _ensure_out(config)
    est, _, _ = _fit_estimator(config)
    est.save(os.path.join(config.out, CHECKPOINT_FILE))
    with open(os.path.join(config.out, HISTORY_FILE), "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,train_rec,train_aux,val_mrr5\n")
        for row in est.history_:
            fh.write(
                f"{row.epoch},{row.train_loss:.6f},{row.train_rec:.6f},"
                f"{row.train_aux:.6f},{row.val_mrr5:.6f}\n"
            )
    last = est.history_[-1]
    print(
        f"trained {len(est.history_)} epochs; final loss {last.train_loss:.4f}, "
        f"val MRR@5 {100 * last.val_mrr5:.2f} -> {config.out}"
    )
    return 0


def _load_estimator(config: RunConfig) -> DisenReasonRecommender:
    path = config.checkpoint or os.path.join(config.out, CHECKPOINT_FILE)
    if not os.path.exists(path):
        raise ConfigError(f"checkpoint not found: {path!r}")
    return DisenReasonRecommender.load(path)


def _cmd_eval(config: RunConfig) -> int:
    _ensure_out(config)
    dataset = read_dataset(_require(config, "data"))
    _, test_ds = split_train_test(dataset, config.split_ratio, config.seed)
    est = _load_estimator(config)
    report = est.evaluate(test_ds, ks=(5, 20))
    write_metrics_csv(
        report, est.hyper_, config.seed, os.path.join(config.out, METRICS_FILE)
    )
    print(
        f"evaluated {report.n_samples} test sequences: "
        + " ".join(
            f"RC@{k}={report.recall[k]:.2f} MRR@{k}={report.mrr[k]:.2f}"
            for k in report.ks
        )
    )
    return 0


def _write_spectrum_dump(est: DisenReasonRecommender, dataset, account: int, path: str) -> None:
    matches = [s for s in dataset.sequences if s.account == account]
    if not matches:
        raise ConfigError(f"no sequence for account {account} in the dataset")
    ids, _ = prepare_sequence(matches[0].items, est.hyper_.max_len, est.n_items_)
    seq_embed = lookup_sequence(est.propagated_.h_items, ids)
    spectrum = to_frequency(seq_embed)
    edges = band_edges(spectrum.shape[0], est.hyper_.bandwidth)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("band,bin,dimension,magnitude\n")
        for z, (lo, hi) in enumerate(edges):
            for b in range(lo, hi):
                for dim in range(spectrum.shape[1]):
                    fh.write(f"{z},{b},{dim},{abs(spectrum[b, dim]):.6e}\n")


def _write_trace_dump(est: DisenReasonRecommender, dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("account_id,T,stop_reason,sim_2..sim_T\n")
        for seq in dataset.sequences:
            trace = est.reasoning_trace(seq.account, seq.items)
            sims = ",".join(f"{s:.6f}" for s in trace.similarities)
            row = f"{seq.account},{trace.steps},{trace.stop_reason}"
            fh.write(row + ("," + sims if sims else "") + "\n")


def _cmd_analyze(config: RunConfig) -> int:
    _ensure_out(config)
    dataset = read_dataset(_require(config, "data"))
    est = _load_estimator(config)
    truth = read_ground_truth(config.ground_truth) if config.ground_truth else None
    report = est.latent_user_report(dataset, truth)
    write_count_report_csv(report, os.path.join(config.out, COUNT_REPORT_FILE))
    if config.dump_spectrum:
        _write_spectrum_dump(
            est, dataset, config.spectrum_account,
            os.path.join(config.out, SPECTRUM_FILE),
        )
    if config.dump_traces:
        _write_trace_dump(est, dataset, os.path.join(config.out, TRACES_FILE))
    summary = f"analyzed {len(report.accounts)} accounts"
    if truth is not None:
        summary += (
            f"; spearman(T, K) = {report.spearman:.3f}, "
            f"exact match {100 * report.exact_match:.1f}%"
        )
    print(summary)
    return 0


def _cmd_selftest(config: RunConfig) -> int:
    results = selftest.run_all()
    failed = 0
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"[{status}] {result.name}: {result.detail}")
        if not result.passed:
            failed += 1
    if failed:
        raise RuntimeError(f"{failed} selftest check(s) failed")
    return 0


COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "analyze": _cmd_analyze,
    "selftest": _cmd_selftest,
}


def execute(command: str, config: RunConfig) -> int:
    """Run one command against a resolved config; returns the exit status."""
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}")
    return COMMANDS[command](config)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors map to exit code 1
        raise ConfigError(message)


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="path to a key = value config file")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--bandwidth", type=int, help="frequency band width")
    parser.add_argument("--layers", type=int, help="propagation layers")
    parser.add_argument("--alpha", type=float, help="termination threshold")
    parser.add_argument("--beta", type=float, help="auxiliary loss weight")
    parser.add_argument("--tmax", type=int, help="reasoning step cap")
    parser.add_argument("--maxlen", type=int, help="maximum sequence length")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--lr", type=float, help="learning rate")
    parser.add_argument("--batch", type=int, help="mini-batch size")
    parser.add_argument("--data", help="dataset file path")
    parser.add_argument("--checkpoint", help="checkpoint file path")


def _overrides_from_args(args: argparse.Namespace) -> dict:
    mapping = {
        "out": "out",
        "seed": "seed",
        "bandwidth": "bandwidth",
        "layers": "layers",
        "alpha": "alpha",
        "beta": "beta",
        "tmax": "t_max",
        "maxlen": "max_len",
        "epochs": "epochs",
        "lr": "learning_rate",
        "batch": "batch_size",
        "data": "data",
        "checkpoint": "checkpoint",
        "ground_truth": "ground_truth",
        "n_items": "n_items",
        "n_accounts": "n_accounts",
        "k_max": "k_max",
        "pool_size": "pool_size",
        "mean_len": "mean_len",
        "seqs_per_account": "sequences_per_account",
        "spectrum": "dump_spectrum",
        "traces": "dump_traces",
        "spectrum_account": "spectrum_account",
    }
    overrides = {}
    for attr, key in mapping.items():
        if hasattr(args, attr) and getattr(args, attr) is not None:
            overrides[key] = getattr(args, attr)
    return overrides


def build_parser() -> _Parser:
    parser = _Parser(prog="disenreason", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic dataset")
    _add_common_flags(gen)
    gen.add_argument("--n-items", dest="n_items", type=int)
    gen.add_argument("--n-accounts", dest="n_accounts", type=int)
    gen.add_argument("--k-max", dest="k_max", type=int)
    gen.add_argument("--pool-size", dest="pool_size", type=int)
    gen.add_argument("--mean-len", dest="mean_len", type=float)
    gen.add_argument("--seqs-per-account", dest="seqs_per_account", type=int)

    _add_common_flags(sub.add_parser("train", help="train a model"))
    _add_common_flags(sub.add_parser("eval", help="evaluate a checkpoint"))

    analyze = sub.add_parser("analyze", help="latent-user-count analysis")
    _add_common_flags(analyze)
    analyze.add_argument("--ground-truth", dest="ground_truth")
    analyze.add_argument("--spectrum", action="store_true", default=None,
                         help="dump a per-band spectrum CSV")
    analyze.add_argument("--spectrum-account", dest="spectrum_account", type=int)
    analyze.add_argument("--traces", action="store_true", default=None,
                         help="dump per-account reasoning traces")

    _add_common_flags(sub.add_parser("selftest", help="run invariant suites"))
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        config = parse_config(getattr(args, "config", None), _overrides_from_args(args))
        return execute(args.command, config)
    except (ConfigError, DatasetFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure: single-line diagnostic
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
