"""Command line interface: ``gdpcast {describe,adf,sarima,lstm,compare}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .pipeline import (CV_NOTE, RunConfig, StageError, atomic_dir, describe_text, run_adf,
                       run_compare, run_describe, run_lstm, run_sarima)
from .series import load_csv, split_holdout

log = logging.getLogger("gdpcast")


def _csv_list(kind):
    def parse(text):
        return [kind(v) for v in text.split(",") if v.strip()]
    return parse


def _sarima_range(text):
    name, _, values = text.partition("=")
    if name not in ("p", "d", "q", "P", "D", "Q", "s") or not values:
        raise argparse.ArgumentTypeError(f"expected NAME=V1,V2 with NAME in p,d,q,P,D,Q,s: {text!r}")
    vals = [int(v) for v in values.split(",")]
    return name, vals[0] if name == "s" else vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # defaults are None so that config-file values survive unless a flag is given
    common.add_argument("--config", help="JSON file with run settings; flags override it")
    common.add_argument("--data", help="CSV file with header 'period,value'")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--holdout", type=int)
    common.add_argument("--lookback", type=int)
    common.add_argument("--scale", action="store_true", default=None,
                        help="z-score LSTM inputs on the training split")
    common.add_argument("--workers", type=int)
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="gdpcast", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("describe", parents=[common], help="descriptive statistics")

    p = sub.add_parser("adf", parents=[common], help="augmented Dickey-Fuller test")
    p.add_argument("--spec", dest="adf_spec", choices=("no-constant", "constant", "constant+trend"))
    p.add_argument("--trend", dest="adf_spec", action="store_const", const="constant+trend",
                   help="shorthand for --spec constant+trend")
    p.add_argument("--max-lag", type=int)

    sarima_opts = argparse.ArgumentParser(add_help=False)
    sarima_opts.add_argument("--sarima-range", type=_sarima_range, action="append", metavar="NAME=V,..",
                             help="restrict one SARIMA order axis, e.g. p=0,1 (repeatable)")
    lstm_opts = argparse.ArgumentParser(add_help=False)
    lstm_opts.add_argument("--epochs", type=_csv_list(int))
    lstm_opts.add_argument("--units", type=_csv_list(int))
    lstm_opts.add_argument("--dropout", dest="recurrent_dropout", type=_csv_list(float))
    lstm_opts.add_argument("--batch-size", type=_csv_list(int))
    lstm_opts.add_argument("--l2", dest="l2_lambda", type=_csv_list(float))
    lstm_opts.add_argument("--learning-rate", type=float)
    lstm_opts.add_argument("--folds", type=int)
    lstm_opts.add_argument("--activation", choices=("relu", "tanh"))

    sub.add_parser("sarima", parents=[common, sarima_opts], help="AIC order search and holdout forecast")
    sub.add_parser("lstm", parents=[common, lstm_opts], help="LSTM grid search and holdout forecast")
    sub.add_parser("compare", parents=[common, sarima_opts, lstm_opts], help="full SARIMA vs LSTM run")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    settings = {}
    if args.config:
        with open(args.config) as fh:
            settings = json.load(fh)
        unknown = set(settings) - set(RunConfig.keys())
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for key in RunConfig.keys():
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    cfg = RunConfig(**settings)
    for name, values in getattr(args, "sarima_range", None) or []:
        cfg.sarima_ranges[name] = values
    for axis in ("epochs", "units", "recurrent_dropout", "batch_size", "l2_lambda"):
        value = getattr(args, axis, None)
        if value:
            cfg.lstm_space[axis] = value
    if cfg.data is None:
        raise ValueError("no data file given (use --data or the config file)")
    return cfg


def _dump(obj) -> str:
    return json.dumps(obj, indent=2)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Path(cfg.out) if cfg.out else None
        if args.command in ("sarima", "lstm", "compare") and out is None:
            out = Path("results")
        if out is None:
            _run(args.command, cfg, None)
        else:
            with atomic_dir(out) as tmp:
                _run(args.command, cfg, tmp)
            print(f"results written to {out}", file=sys.stderr)
    except StageError as exc:
        print(f"gdpcast {args.command}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        print(f"gdpcast {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


def _run(command: str, cfg: RunConfig, out: Path | None) -> None:
    if command == "describe":
        stats = run_describe(cfg, out)
        print(describe_text(stats))
    elif command == "adf":
        print(_dump(run_adf(cfg, out).as_dict()))
    elif command == "sarima":
        train, _ = split_holdout(load_csv(cfg.data), cfg.holdout)
        best, _, fc = run_sarima(cfg, train, cfg.holdout, out)
        print(f"best order {best.order}  AIC {best.aic:.4f}")
        print("forecast:", _dump(fc.tolist()))
    elif command == "lstm":
        train, _ = split_holdout(load_csv(cfg.data), cfg.holdout)
        model, _, _, fc = run_lstm(cfg, train, cfg.holdout, out)
        c = model.config
        print(f"best: epochs={c.epochs} recurrent_dropout={c.recurrent_dropout} units={c.units} "
              f"batch_size={c.batch_size} l2={c.l2_lambda}")
        print("forecast:", _dump(fc.tolist()))
        print(CV_NOTE)
    elif command == "compare":
        report = run_compare(cfg, out)
        print(report.to_text())
        print(CV_NOTE)


if __name__ == "__main__":
    sys.exit(main())
