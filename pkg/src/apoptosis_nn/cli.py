"""``apoptosis-nn`` command-line front end.

Exit codes: 0 success, 2 configuration error, 3 data or model-file error,
4 training diverged.
"""

from __future__ import annotations

import functools
import json
import logging
import math
import sys
from pathlib import Path

import click
import numpy as np

from . import config as cfgmod
from .apoptosis import detect_candidates, pairwise_ratios
from .data import Dataset, gen_abs_dataset, gen_planted_teacher, load_csv, load_idx, save_csv
from .errors import ConfigError, ContractError, DivergedError, FormatError, ShapeError
from .network import Activation, LossKind, init_network, load, param_count, save
from .trainer import (
    SolverConfig,
    compare_to_baseline,
    evaluate_accuracy,
    evaluate_auc,
    pretrain_autoencoders,
    summarize_run,
    train,
)

EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 2, 3, 4

log = logging.getLogger("apoptosis_nn")


class DataError(Exception):
    """Wraps an unreadable or malformed input file."""


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def exit_codes(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
        except DataError as exc:
            _fail(EXIT_DATA, str(exc))
        except DivergedError as exc:
            _fail(EXIT_DIVERGED, str(exc))

    return wrapper


def _read_model(path):
    try:
        return load(path)
    except (OSError, FormatError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None


def _load_dataset(key: str, source: dict) -> Dataset:
    try:
        if source["format"] == "idx":
            ds = load_idx(source["images"], source["labels"], normalize=source.get("normalize", True))
        else:
            ds = load_csv(
                source["path"],
                label_column=source.get("label_column", "first"),
                binary=source.get("binary", False),
                skip_header=source.get("skip_header", False),
                standardize=source.get("standardize", False),
            )
    except OSError as exc:
        raise DataError(f"{key}: cannot read {exc.filename}: {exc.strerror}") from None
    except ValueError as exc:
        raise DataError(f"{key}: {exc}") from None
    if "limit" in source:
        ds = ds.subset(source["limit"])
    return ds


@click.group()
@click.option("-v", "--verbose", count=True, help="Log progress (-vv for debug).")
@click.version_option(package_name="artifact")
def main(verbose: int):
    """Train feedforward networks that merge redundant neurons while they learn."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(message)s", stream=sys.stderr)


# -- train ------------------------------------------------------------------------

@main.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False), help="JSON run config.")
@click.option("--apoptosis", help="off, a preset name, or factor=<f>.")
@click.option("--schedule", help="quarter-log, half-fixed=<n>, random[=<k>] or end.")
@click.option("--degree", help="fixed or ramp=<f0>:<f1>.")
@click.option("--workers", type=int, help="Simulated data-parallel replicas.")
@click.option("--seed", type=int)
@click.option("--iterations", type=int, help="Total SGD iterations (replaces 'epochs').")
@click.option("--metrics-out", type=click.Path(dir_okay=False), help="Metrics JSON-lines file.")
@click.option("--report-out", type=click.Path(dir_okay=False), help="Apoptosis-event JSON-lines file.")
@click.option("--model-out", type=click.Path(dir_okay=False), help="Final model file.")
@click.option("--baseline", type=click.Path(dir_okay=False), help="Baseline metrics file for speedups.")
@exit_codes
def train_cmd(config_path, iterations, **overrides):
    """Train one network as described by a config file."""
    cfg = cfgmod.load_config(config_path)
    if iterations is not None:
        overrides.update(iterations=iterations)
        cfg.epochs = None
    cfg = cfgmod.override(cfg, **overrides)
    summary = run_training(cfg)
    click.echo(json.dumps(summary))


def _resolve(cfg: cfgmod.RunConfig, train_set: Dataset):
    sizes = list(cfg.sizes)
    if sizes[0] != train_set.width:
        raise ConfigError("sizes[0]", f"input size {sizes[0]} but the data has {train_set.width} features")
    binary_out = sizes[-1] == 1
    if binary_out and train_set.class_count != 2:
        raise ConfigError("sizes[-1]", "a single output needs binary labels")
    if not binary_out and sizes[-1] != train_set.class_count:
        raise ConfigError("sizes[-1]", f"{sizes[-1]} outputs for {train_set.class_count} classes")
    loss = LossKind.parse(cfg.loss) if cfg.loss else (LossKind.SIGMOID_BCE if binary_out else LossKind.SOFTMAX_CE)
    if loss != LossKind.MSE and Activation.parse(cfg.output_activation) != Activation.LINEAR:
        raise ConfigError("output_activation", f"{loss.value} works on logits; use a linear output")
    if cfg.iterations is not None:
        T = cfg.iterations
    else:
        T = max(1, math.ceil(cfg.epochs * math.ceil(len(train_set) / cfg.batch_size)))
    try:
        solver = SolverConfig(T, cfg.batch_size, float(cfg.lr), cfg.lr_decay, float(cfg.momentum), loss, cfg.seed)
    except ContractError as exc:
        raise ConfigError("solver", str(exc)) from None
    return solver


def run_training(cfg: cfgmod.RunConfig) -> dict:
    if cfg.train_data is None:
        raise ConfigError("train_data", "required for training")
    train_set = _load_dataset("train_data", cfg.train_data)
    test_set = _load_dataset("test_data", cfg.test_data) if cfg.test_data else None
    solver = _resolve(cfg, train_set)
    apop = cfgmod.apoptosis_config(cfg)
    if apop is not None and solver.iterations < 4:
        raise ConfigError("iterations", "apoptosis schedules need at least 4 iterations")
    if test_set is not None and test_set.width != train_set.width:
        raise DataError(f"test_data has {test_set.width} features, train_data has {train_set.width}")

    if cfg.pretrain_epochs > 0:
        net = pretrain_autoencoders(cfg.sizes, cfg.activation, train_set, cfg.pretrain_epochs, seed=cfg.seed,
                                    lr=cfg.pretrain_lr, batch_size=cfg.batch_size,
                                    output_activation=cfg.output_activation)
    else:
        net = init_network(cfg.sizes, cfg.activation, cfg.output_activation, seed=cfg.seed)
    initial = param_count(net)

    report_out = cfg.report_out
    if report_out is None and cfg.metrics_out is not None:
        report_out = str(Path(cfg.metrics_out).with_suffix(".apoptosis.jsonl"))
    metrics_fh = open(cfg.metrics_out, "w") if cfg.metrics_out else None
    report_fh = open(report_out, "w") if report_out and apop is not None else None

    def write(fh, obj):
        if fh is not None:
            fh.write(json.dumps(obj) + "\n")
            fh.flush()

    try:
        net, records, _ = train(
            net, train_set, test_set, solver, apop=apop, workers=cfg.workers,
            on_record=lambda r: write(metrics_fh, r.to_json()),
            on_event=lambda rep: write(report_fh, rep.to_json()),
        )
        summary = summarize_run(records, initial)
        if cfg.baseline:
            try:
                from .report import read_metrics

                _, base = read_metrics(cfg.baseline)
            except OSError as exc:
                raise DataError(f"baseline: cannot read {cfg.baseline}: {exc.strerror}") from None
            except FormatError as exc:
                raise DataError(f"baseline: {exc}") from None
            if base is None:
                raise DataError(f"baseline: {cfg.baseline} has no summary record")
            summary = compare_to_baseline(summary, base)
        write(metrics_fh, summary)
    finally:
        for fh in (metrics_fh, report_fh):
            if fh is not None:
                fh.close()
    if cfg.model_out:
        save(net, cfg.model_out)
    return summary


# -- inspect ----------------------------------------------------------------------

def inspect_model(net, f: float) -> list[dict]:
    rows = []
    for l in range(len(net.layers) - 1):
        ratios = pairwise_ratios(net, l)
        rules = {}
        for name, r in ratios.items():
            rules[name] = {
                "pairs": int(r.size),
                "min": float(np.min(r)) if r.size else None,
                "median": float(np.median(r)) if r.size else None,
            }
        rows.append({
            "layer": l,
            "activation": net.layers[l].activation.name.lower(),
            "neurons": net.layers[l].n_out,
            "rules": rules,
            "candidates": len(detect_candidates(net, l, f)),
        })
    return rows


@main.command("inspect")
@click.argument("model", type=click.Path(dir_okay=False))
@click.option("--factor", "-f", type=float, default=1.75, show_default=True)
@click.option("--json", "as_json", is_flag=True, help="One JSON object per hidden layer.")
@exit_codes
def inspect_cmd(model, factor, as_json):
    """Pairwise redundancy statistics of each hidden layer (read-only).

    Distances are reported as ratios to each rule's scale, so a pair is a
    candidate when its ratio is below 1/f.
    """
    if not factor > 1:
        raise ConfigError("--factor", f"must be > 1, got {factor}")
    net = _read_model(model)
    for row in inspect_model(net, factor):
        if as_json:
            click.echo(json.dumps(row))
            continue
        click.echo(f"layer {row['layer']} ({row['activation']}, {row['neurons']} neurons): "
                   f"{row['candidates']} candidates at f={factor:g}")
        for name, st in row["rules"].items():
            if st["pairs"]:
                click.echo(f"  {name:<17} pairs {st['pairs']:>7}  min {st['min']:.4g}  median {st['median']:.4g}")
            else:
                click.echo(f"  {name:<17} pairs       0")


# -- gen ----------------------------------------------------------------------------

@main.command("gen")
@click.argument("kind", type=click.Choice(["teacher", "abs"]))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="CSV output (label first).")
@click.option("--model-out", type=click.Path(dir_okay=False), help="Teacher model file.")
@click.option("-d", "--inputs", "d", type=int, default=4, show_default=True)
@click.option("-n", "--hidden", "n", type=int, default=8, show_default=True)
@click.option("-k", "--pairs", "k", type=int, default=3, show_default=True)
@click.option("--activation", default="sigmoid", show_default=True)
@click.option("--classes", type=int, default=2, show_default=True)
@click.option("--alpha", type=float, help="Fixed multiple for relu pairs.")
@click.option("--isolate-factor", type=float, help="Redraw until only planted pairs are candidates.")
@click.option("--samples", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@exit_codes
def gen_cmd(kind, out, model_out, d, n, k, activation, classes, alpha, isolate_factor, samples, seed):
    """Write a synthetic dataset (and, for teacher, its model)."""
    try:
        if kind == "teacher":
            teacher, ds = gen_planted_teacher(d, n, k, activation, samples=samples, seed=seed, classes=classes,
                                              alpha=alpha, isolate_factor=isolate_factor)
        else:
            teacher, ds = None, gen_abs_dataset(samples, seed=seed)
    except ValueError as exc:
        raise ConfigError(kind, str(exc)) from None
    save_csv(ds, out)
    if teacher is not None and model_out:
        save(teacher, model_out)
    click.echo(f"wrote {len(ds)} rows x {ds.width + 1} columns to {out}")


# -- eval -----------------------------------------------------------------------------

@main.command("eval")
@click.argument("model", type=click.Path(dir_okay=False))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="CSV dataset.")
@click.option("--label-column", type=click.Choice(["first", "last"]), default="first", show_default=True)
@click.option("--skip-header", is_flag=True)
@click.option("--images", type=click.Path(dir_okay=False), help="IDX image file.")
@click.option("--labels", type=click.Path(dir_okay=False), help="IDX label file.")
@exit_codes
def eval_cmd(model, csv_path, label_column, skip_header, images, labels):
    """Accuracy (and AUC for two classes) of a model on a dataset."""
    if csv_path is not None:
        source = {"format": "csv", "path": csv_path, "label_column": label_column, "skip_header": skip_header}
    elif images is not None and labels is not None:
        source = {"format": "idx", "images": images, "labels": labels}
    else:
        raise ConfigError("--csv", "give --csv, or both --images and --labels")
    net = _read_model(model)
    ds = _load_dataset("data", source)
    if net.n_outputs == 1 and ds.class_count > 2:
        raise DataError(f"single-output model but the data has {ds.class_count} classes")
    if ds.width != net.n_inputs:
        raise DataError(f"model expects {net.n_inputs} features, data has {ds.width}")
    if net.n_outputs > 1 and net.n_outputs < ds.class_count:
        raise DataError(f"model has {net.n_outputs} outputs, data has {ds.class_count} classes")
    if net.n_outputs > 1:
        ds = Dataset(ds.features, ds.labels, net.n_outputs)
    try:
        result = {"samples": len(ds), "accuracy": evaluate_accuracy(net, ds), "auc": evaluate_auc(net, ds)}
    except ShapeError as exc:
        raise DataError(str(exc)) from None
    click.echo(json.dumps(result))


# -- report ---------------------------------------------------------------------------

@main.command("report")
@click.argument("metrics", nargs=-1, required=True, type=click.Path(dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False), help="Where figures and summary.csv go.")
@exit_codes
def report_cmd(metrics, out_dir):
    """Plot loss, accuracy and parameter count for one or more runs."""
    from .report import render

    try:
        written = render(metrics, out_dir)
    except OSError as exc:
        raise DataError(f"cannot read {exc.filename}: {exc.strerror}") from None
    except FormatError as exc:
        raise DataError(str(exc)) from None
    for p in written:
        click.echo(str(p))


if __name__ == "__main__":
    main()
