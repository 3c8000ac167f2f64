"""Command-line interface: train, eval, noise-sweep and predict.

Settings come from built-in defaults, then an optional ``key = value`` config
file (keys mirror ``ExperimentConfig`` / ``HyperParams`` fields), then
command-line flags, each overriding the previous.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import datetime as dt
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from importlib import metadata
from pathlib import Path

from . import __version__
from . import data as ds
from .classifier import (
    LMCHD,
    QLMCHD,
    HyperParams,
    TrainingError,
    fit_multiclass,
    load_model,
    model_to_dict,
)
from .evaluation import ExperimentConfig, repeated_holdout_eval
from .kernels import KernelSpec
from .qp import QpError

EXIT_OK, EXIT_USAGE, EXIT_TRAINING, EXIT_DATA = 0, 1, 2, 3

log = logging.getLogger("qlmchd")

RESULT_FIELDS = [
    "dataset", "method", "kernel", "sigma", "B", "C", "tau", "noise_kind", "noise_level",
    "k", "mean", "std", "failures", "seed", "run_id",
]

# config key -> parser
_FLOAT = float
_INT = int


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _floats(v):
    if isinstance(v, (list, tuple)):
        return tuple(float(x) for x in v)
    return tuple(float(x) for x in str(v).replace(";", ",").split(",") if x.strip())


def _opt_int(v):
    return None if v in (None, "", "none", "None") else int(v)


SETTINGS = {
    "kernel": str, "sigma": _FLOAT, "B": _FLOAT, "C": _FLOAT, "tau": _FLOAT, "qp_tol": _FLOAT,
    "cp_tol": _FLOAT, "cp_max_iter": _INT,
    "strategy": str, "method": str, "split_ratio": _FLOAT, "repetitions": _INT, "seed": _INT,
    "label_noise": _FLOAT, "feature_noise": _FLOAT, "noise_target": str, "standardize": _bool,
    "B_grid": _floats, "tau_grid": _floats, "C_grid": _floats, "inner_ratio": _FLOAT,
    "inner_repetitions": _INT, "subsample": _opt_int,
    "format": str, "delimiter": str, "label_column": _INT,
}
_PARAM_KEYS = ("B", "C", "tau", "qp_tol", "cp_tol", "cp_max_iter")
_CONFIG_KEYS = (
    "strategy", "method", "split_ratio", "repetitions", "seed", "label_noise", "feature_noise",
    "noise_target", "standardize", "B_grid", "tau_grid", "C_grid", "inner_ratio",
    "inner_repetitions", "subsample",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def read_config_file(path) -> dict:
    """``key = value`` lines (an optional ``[section]`` header is allowed)."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    parser.read_string(text)
    values = {}
    for section in parser.sections():
        values.update(parser[section])
    return values


def resolve_settings(file_values: dict, flag_values: dict) -> dict:
    merged = {}
    for source in (file_values, flag_values):
        for key, value in source.items():
            if value is None:
                continue
            if key not in SETTINGS:
                raise UsageError(f"unknown setting {key!r}")
            try:
                merged[key] = SETTINGS[key](value)
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {exc}") from None
    return merged


def build_config(settings: dict) -> ExperimentConfig:
    try:
        family = settings.get("kernel", "rbf")
        kernel = KernelSpec.linear() if family == "linear" else KernelSpec.rbf(settings.get("sigma", 1.0))
        params = HyperParams(kernel, **{k: settings[k] for k in _PARAM_KEYS if k in settings})
        return ExperimentConfig(params, **{k: settings[k] for k in _CONFIG_KEYS if k in settings})
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def method_label(config: ExperimentConfig) -> str:
    if config.method == LMCHD:
        return "LMC-HD"
    if not config.B_grid and config.params.B == 0:
        return "LMC-HD (B=0)"
    return "QLMC-HD"


def _fmt(v):
    return f"{v:g}" if isinstance(v, float) else str(v)


def _grid_or_value(grid, value):
    return "|".join(_fmt(v) for v in grid) if grid else _fmt(value)


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def artifact_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return __version__


def run_id(config: ExperimentConfig, dataset_hash: str, extra=None) -> str:
    blob = json.dumps({"config": config.to_dict(), "data": dataset_hash, "extra": extra}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _now():
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def write_atomic(path, text: str) -> None:
    """Write via a temporary file in the same directory, so failures leave nothing behind."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def manifest(command, config, dataset, data_path, started, rid, **extra) -> dict:
    return {
        "run_id": rid,
        "command": command,
        "artifact_version": artifact_version(),
        "mode": "LMC-HD-equivalent" if method_label(config) != "QLMC-HD" else "QLMC-HD",
        "config": config.to_dict(),
        "dataset": {
            "name": dataset.name,
            "path": str(data_path),
            "sha256": file_sha256(data_path),
            "n": dataset.n,
            "d": dataset.d,
            "classes": [str(c) for c in dataset.classes],
        },
        "started": started,
        "finished": _now(),
        **extra,
    }


def result_row(dataset, config: ExperimentConfig, metrics, noise_kind, noise_level, rid) -> dict:
    p = config.params
    return {
        "dataset": dataset.name,
        "method": method_label(config),
        "kernel": p.kernel.family.value,
        "sigma": _fmt(p.kernel.sigma),
        "B": "0" if config.method == LMCHD else _grid_or_value(config.B_grid, p.B),
        "C": _grid_or_value(config.C_grid, p.C),
        "tau": _grid_or_value(config.tau_grid, p.tau),
        "noise_kind": noise_kind,
        "noise_level": _fmt(float(noise_level)),
        "k": config.repetitions,
        "mean": f"{metrics.accuracy_mean:.4f}",
        "std": f"{metrics.accuracy_std:.4f}",
        "failures": metrics.failures,
        "seed": config.seed,
        "run_id": rid,
    }


def results_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=RESULT_FIELDS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


# -- commands -------------------------------------------------------------------


def _load(args, settings):
    return ds.load_dataset(
        args.data,
        fmt=settings.get("format", ds.DELIMITED),
        delimiter=settings.get("delimiter", ","),
        label_column=settings.get("label_column", -1),
    )


def cmd_train(args, settings) -> int:
    config = build_config(settings)
    started = _now()
    dataset = _load(args, settings)
    X = dataset.features
    standardizer = None
    if config.standardize:
        standardizer = ds.Standardizer.fit(X)
        X = standardizer.transform(X)
    model = fit_multiclass(X, dataset.labels, config.strategy, config.params, config.method)
    model.standardizer = standardizer
    data_path = ds.resolve_path(args.data)
    rid = run_id(config, file_sha256(data_path), "train")
    out = Path(args.model)
    man = manifest(
        "train", config, dataset, data_path, started, rid,
        model=str(out), members=len(model.members),
        overlap_events=[[list(k), c] for k, c in model.overlap_events],
    )
    write_atomic(out, json.dumps(model_to_dict(model)))
    write_atomic(args.manifest or f"{out}.manifest.json", json.dumps(man, indent=2))
    print(f"trained {method_label(config)} on {dataset.name}: {len(model.members)} {config.strategy.upper()} members -> {out}")
    return EXIT_OK


def _evaluate(dataset, config, noise_kind, level):
    if noise_kind == "label":
        config = config.replace(label_noise=level, feature_noise=0.0)
    elif noise_kind == "feature":
        config = config.replace(feature_noise=level, label_noise=0.0)
    return config, repeated_holdout_eval(dataset, config)


def _noise_of(config):
    if config.label_noise:
        return "label", config.label_noise
    if config.feature_noise:
        return "feature", config.feature_noise
    return "none", 0.0


def _emit(args, command, config, dataset, started, rows, table):
    print(table)
    data_path = ds.resolve_path(args.data)
    rid = rows[0]["run_id"] if rows else run_id(config, file_sha256(data_path))
    if args.results:
        write_atomic(args.results, results_csv(rows))
    man_path = args.manifest or (f"{args.results}.manifest.json" if args.results else None)
    if man_path:
        write_atomic(man_path, json.dumps(
            manifest(command, config, dataset, data_path, started, rid, results=args.results), indent=2
        ))


def _failure_note(m):
    return f"  [{m.failures}/{len(m.per_repetition)} repetitions failed]" if m.failures else ""


def cmd_eval(args, settings) -> int:
    config = build_config(settings)
    started = _now()
    dataset = _load(args, settings)
    rid = run_id(config, file_sha256(ds.resolve_path(args.data)), "eval")
    config, metrics = _evaluate(dataset, config, None, None)
    kind, level = _noise_of(config)
    row = result_row(dataset, config, metrics, kind, level, rid)
    table = f"{dataset.name} {method_label(config)} {metrics.accuracy_mean:.1f}±{metrics.accuracy_std:.1f}{_failure_note(metrics)}"
    _emit(args, "eval", config, dataset, started, [row], table)
    return EXIT_OK if metrics.completed else EXIT_TRAINING


def cmd_noise_sweep(args, settings) -> int:
    config = build_config(settings)
    started = _now()
    try:
        levels = _floats(args.levels)
    except ValueError as exc:
        raise UsageError(f"bad --levels: {exc}") from None
    if not levels or any(v < 0 for v in levels) or (args.kind == "label" and any(v >= 1 for v in levels)):
        raise UsageError(f"invalid noise levels {args.levels!r}")
    dataset = _load(args, settings)
    rid = run_id(config, file_sha256(ds.resolve_path(args.data)), ["sweep", args.kind, list(levels)])
    methods = [config.replace(method=QLMCHD), config.replace(method=LMCHD)]
    rows, lines = [], []
    lines.append(f"{'level':>8}  " + "  ".join(f"{method_label(m):>16}" for m in methods))
    ok = True
    for level in levels:
        cells = []
        for m in methods:
            cfg, metrics = _evaluate(dataset, m, args.kind, level)
            ok &= metrics.completed > 0
            rows.append(result_row(dataset, cfg, metrics, args.kind, level, rid))
            cells.append(f"{metrics.accuracy_mean:.1f}±{metrics.accuracy_std:.1f}" + (f"({metrics.failures}F)" if metrics.failures else ""))
        lines.append(f"{level:>8g}  " + "  ".join(f"{c:>16}" for c in cells))
    table = f"{dataset.name}: {args.kind} noise\n" + "\n".join(lines)
    _emit(args, "noise-sweep", config, dataset, started, rows, table)
    return EXIT_OK if ok else EXIT_TRAINING


def cmd_predict(args, settings) -> int:
    try:
        model = load_model(args.model)
    except (OSError, ValueError, KeyError) as exc:
        raise ds.DataError(f"cannot read model {args.model}: {exc}") from None
    X = ds.load_features(
        args.data, model.X.shape[1],
        delimiter=settings.get("delimiter", ","), label_column=settings.get("label_column", -1),
    )
    pred = model.predict(X)
    text = "".join(f"{p}\n" for p in pred)
    if args.output:
        write_atomic(args.output, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- entry point ----------------------------------------------------------------


def _add_setting_flags(p):
    g = p.add_argument_group("settings (override the config file)")
    g.add_argument("--config", help="key = value settings file")
    g.add_argument("--kernel", choices=["rbf", "linear"])
    g.add_argument("--sigma", help="RBF width")
    g.add_argument("-B", "--B", dest="B", help="pull toward the class mean (0 gives LMC-HD)")
    g.add_argument("-C", "--C", dest="C", help="ball slack penalty")
    g.add_argument("--tau", help="relative eigenvalue cut-off for the affine hull")
    g.add_argument("--strategy", choices=["oao", "oar"])
    g.add_argument("--method", choices=[QLMCHD, LMCHD])
    g.add_argument("--split-ratio", dest="split_ratio")
    g.add_argument("-k", "--repetitions")
    g.add_argument("--seed")
    g.add_argument("--label-noise", dest="label_noise")
    g.add_argument("--feature-noise", dest="feature_noise")
    g.add_argument("--noise-target", dest="noise_target", choices=["both", "train"])
    g.add_argument("--standardize", dest="standardize", action="store_const", const="true")
    g.add_argument("--no-standardize", dest="standardize", action="store_const", const="false")
    g.add_argument("--B-grid", dest="B_grid", help="comma-separated values tuned by nested holdout")
    g.add_argument("--tau-grid", dest="tau_grid")
    g.add_argument("--C-grid", dest="C_grid")
    g.add_argument("--inner-repetitions", dest="inner_repetitions")
    g.add_argument("--subsample", help="stratified subsample size for large datasets")
    g.add_argument("--format", choices=[ds.DELIMITED, ds.SPARSE])
    g.add_argument("--delimiter")
    g.add_argument("--label-column", dest="label_column")


_FLAG_KEYS = [k for k in SETTINGS]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qlmchd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {artifact_version()}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit on a whole dataset and save the model")
    p.add_argument("data", help=f"dataset file (or a name under ${ds.DATA_DIR_ENV})")
    p.add_argument("-o", "--model", required=True, help="model output path")
    p.add_argument("--manifest", help="manifest path (default: <model>.manifest.json)")
    _add_setting_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="repeated stratified holdout accuracy")
    p.add_argument("data")
    p.add_argument("--results", help="results CSV path")
    p.add_argument("--manifest", help="manifest path (default: <results>.manifest.json)")
    _add_setting_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("noise-sweep", help="accuracy against noise level for QLMC-HD and LMC-HD")
    p.add_argument("data")
    p.add_argument("--kind", choices=["label", "feature"], required=True)
    p.add_argument("--levels", default="0.05,0.10,0.15")
    p.add_argument("--results")
    p.add_argument("--manifest")
    _add_setting_flags(p)
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("predict", help="label the rows of a file with a saved model")
    p.add_argument("model")
    p.add_argument("data")
    p.add_argument("-o", "--output", help="predictions path (default: stdout)")
    p.add_argument("--delimiter")
    p.add_argument("--label-column", dest="label_column")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        file_values = read_config_file(args.config) if getattr(args, "config", None) else {}
        flags = {k: getattr(args, k) for k in _FLAG_KEYS if getattr(args, k, None) is not None}
        settings = resolve_settings(file_values, flags)
        return args.func(args, settings)
    except UsageError as exc:
        print(f"qlmchd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (configparser.Error, OSError) as exc:
        if isinstance(exc, OSError) and getattr(args, "config", None) and exc.filename == args.config:
            print(f"qlmchd: error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_USAGE
        if isinstance(exc, configparser.Error):
            print(f"qlmchd: error: bad config file: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(f"qlmchd: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ds.DataError as exc:
        print(f"qlmchd: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingError, QpError) as exc:
        print(f"qlmchd: training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except ValueError as exc:
        # e.g. a holdout ratio that leaves an empty split, or a dimension mismatch
        print(f"qlmchd: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
