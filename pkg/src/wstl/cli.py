"""Command-line interface: ``wstl <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data or model error, 3 failed check.
Errors go to stderr as ``ERROR:<category>: message``.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from . import checks
from .dataset import (DataError, DataSplit, load_tables, read_signal_csv, split, stack, synth_generate,
                      window, write_labeled_csv)
from .formula import horizon, validate
from .learn import TrainConfig, TrainingError, train, write_history_csv
from .metrics import evaluate, format_json, format_table
from .semantics import InsufficientSignalError, robustness_classical, robustness_weighted
from .sparsify import PruneError, prune_tau, prune_top_sbar, train_gated
from .text import ParseError, infer_dim, parse, parse_template, to_text, write_formula

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int):
        super().__init__(message)
        self.category = category
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError("usage", message, EXIT_USAGE)


def _data_paths(paths):
    if paths:
        return paths
    base = os.environ.get("WSTL_DATA_DIR")
    if base:
        found = sorted(p for p in Path(base).iterdir() if p.suffix in (".txt", ".csv"))
        if found:
            return [str(p) for p in found]
    raise CliError("usage", "no --data files given and WSTL_DATA_DIR has no .txt/.csv files", EXIT_USAGE)


def _load_windows(args):
    raw = load_tables(_data_paths(args.data))
    wins = window(raw, args.ki)
    if not wins:
        raise DataError(f"no windows of length {args.ki} found in the data")
    return raw, wins


def _read_model(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError("model", f"cannot read {path}: {exc.strerror}", EXIT_DATA) from None
    try:
        return parse(text, infer_dim(text))
    except ParseError as exc:
        raise CliError("model", f"{path}: {exc}\n{exc.pretty()}", EXIT_DATA) from None


def _structure(source: str, dim: int):
    p = Path(source)
    text = p.read_text(encoding="utf-8") if p.is_file() else source
    try:
        phi = parse_template(text, dim)
    except ParseError as exc:
        raise CliError("usage", f"structure: {exc}\n{exc.pretty()}", EXIT_USAGE) from None
    return phi


def _train_config(args) -> TrainConfig:
    try:
        return TrainConfig(zeta=args.zeta, sigma=args.sigma, epochs=args.epochs, batch_size=args.batch_size,
                           learning_rate=args.lr, optimizer=args.optimizer, seed=args.seed,
                           scale=not args.no_scale)
    except ValueError as exc:
        raise CliError("usage", str(exc), EXIT_USAGE) from None


def _accuracy(phi, windows, sigma) -> float | None:
    if not windows:
        return None
    X, y = stack(windows)
    _, m = evaluate(phi, X, y, sigma)
    return m["accuracy"]


def _model_header(args, raw, data: DataSplit, extra: str = "") -> str:
    lines = [f"features: {', '.join(raw.feature_names)}",
             f"ki={args.ki} sigma={args.sigma:g} zeta={args.zeta:g} epochs={args.epochs} seed={args.seed} "
             f"scale={'off' if args.no_scale else 'on'} train={len(data.train)} test={len(data.test)}"]
    return "\n".join(lines + ([extra] if extra else []))


# -- subcommands ------------------------------------------------------------------

def cmd_train(args) -> int:
    raw, wins = _load_windows(args)
    data = split(wins, args.test_fraction, args.seed, standardize=not args.no_scale)
    structure = _structure(args.structure, data.dim)
    cfg = _train_config(args)
    t0 = time.perf_counter()
    phi, history = train(data, structure, cfg)
    elapsed = time.perf_counter() - t0
    write_formula(args.out, phi, _model_header(args, raw, data))
    if args.history:
        write_history_csv(args.history, history)
    out = {"train_windows": len(data.train), "test_windows": len(data.test),
           "train_accuracy": _accuracy(phi, data.train, args.sigma),
           "test_accuracy": _accuracy(phi, data.test, args.sigma),
           "seconds": round(elapsed, 3), "model": to_text(phi)}
    if args.json:
        print(json.dumps(out, sort_keys=True))
    else:
        print(f"trained on {out['train_windows']} windows in {elapsed:.2f}s")
        for key in ("train_accuracy", "test_accuracy"):
            v = out[key]
            print(f"{key.replace('_', ' ')}: {'undefined' if v is None else f'{v:.4f}'}")
        print(f"model written to {args.out}")
    return EXIT_OK


def _select(wins, args):
    if args.split == "all":
        return wins
    data = split(wins, args.test_fraction, args.seed)
    return data.test if args.split == "test" else data.train


def cmd_evaluate(args) -> int:
    phi = _read_model(args.model)
    _, wins = _load_windows(args)
    chosen = _select(wins, args)
    X, y = stack(chosen)
    problems = validate(phi, X.shape[1])
    if problems:
        raise CliError("model", "; ".join(problems), EXIT_DATA)
    counts, values = evaluate(phi, X, y, args.sigma)
    print(format_json(counts, values) if args.json else format_table(counts, values))
    return EXIT_OK


def cmd_robustness(args) -> int:
    phi = _read_model(args.model)
    s = read_signal_csv(args.signal)
    problems = validate(phi, s.shape[0])
    if problems:
        raise CliError("model", "; ".join(problems), EXIT_DATA)
    if args.classical:
        value = robustness_classical(s, phi, args.k)
    else:
        value = robustness_weighted(s, phi, args.k, args.sigma)
    print(repr(float(value)))
    return EXIT_OK


def cmd_sparsify(args) -> int:
    phi = _read_model(args.model)
    modes = [args.tau is not None, args.top_sbar is not None, args.gates]
    if sum(modes) != 1:
        raise CliError("usage", "choose exactly one of --tau, --top-sbar, --gates", EXIT_USAGE)
    if args.gates:
        raw, wins = _load_windows(args)
        data = split(wins, args.test_fraction, args.seed, standardize=not args.no_scale)
        cfg = _train_config(args)
        pruned, gates, _ = train_gated(data, phi, cfg, args.lambda1, args.lambda2, seed=args.seed)
        acc = _accuracy(pruned, data.test, args.sigma)
        summary = (f"gates: {gates.open_count} of {gates.m} open (lambda1={args.lambda1:g}, "
                   f"lambda2={args.lambda2:g}); test accuracy "
                   f"{'undefined' if acc is None else f'{acc:.4f}'}")
        if args.report:
            with open(args.report, "w", encoding="utf-8") as fh:
                fh.write("index,gate,open\n")
                for i, (g, o) in enumerate(zip(gates.g, gates.g_s)):
                    fh.write(f"{i},{float(g)!r},{int(o)}\n")
        write_formula(args.out, pruned, _model_header(args, raw, data, summary))
        print(summary)
        return EXIT_OK
    try:
        if args.tau is not None:
            pruned, report = prune_tau(phi, args.tau)
        else:
            pruned, report = prune_top_sbar(phi, args.top_sbar)
    except PruneError as exc:
        raise CliError("prune", str(exc), EXIT_DATA) from None
    except ValueError as exc:
        raise CliError("usage", str(exc), EXIT_USAGE) from None
    if args.report:
        report.write_csv(args.report)
    write_formula(args.out, pruned, report.to_text())
    print(report.to_text())
    return EXIT_OK


def cmd_check(args) -> int:
    if not (args.grad or args.properties):
        raise CliError("usage", "choose --grad and/or --properties", EXIT_USAGE)
    results = []
    if args.grad:
        results.append(checks.run_grad(args.trials, args.tol, args.seed))
    if args.properties:
        results.extend(checks.run_properties(args.instances, args.seed))
    for r in results:
        print(r)
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise CliError("check", f"failed: {', '.join(failed)}", EXIT_CHECK)
    return EXIT_OK


def cmd_parse(args) -> int:
    try:
        text = Path(args.formula).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError("data", f"cannot read {args.formula}: {exc.strerror}", EXIT_DATA) from None
    dim = args.dim or infer_dim(text)
    try:
        phi = parse(text, dim)
    except ParseError as exc:
        raise CliError("parse", f"{args.formula}: {exc}\n{exc.pretty()}", EXIT_USAGE) from None
    problems = validate(phi, dim)
    if problems:
        raise CliError("parse", "; ".join(problems), EXIT_USAGE)
    print(to_text(phi))
    if args.verbose:
        print(f"# dimension {dim}, horizon {horizon(phi)}")
    return EXIT_OK


def cmd_synth(args) -> int:
    wins = synth_generate(args.n_per_class, args.length, args.seed)
    write_labeled_csv(args.out, wins)
    print(f"wrote {len(wins)} windows of length {args.length} to {args.out}")
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------

def _add_data(p, required=False):
    p.add_argument("--data", nargs="+", required=required, metavar="CSV",
                   help="labeled CSV files, concatenated in order (default: files in $WSTL_DATA_DIR)")
    p.add_argument("--ki", type=int, default=16, help="window length K_I (default 16)")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)


def _add_training(p):
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--zeta", type=float, default=1.0)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    p.add_argument("--no-scale", action="store_true", help="train on raw features")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="wstl", description="Learn weighted STL formulas as time-series classifiers.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="learn formula parameters from labeled data")
    _add_data(p)
    _add_training(p)
    p.add_argument("--structure", required=True, help="formula file or template text, e.g. 'G[0,15](pred)'")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--history", help="write per-epoch loss/accuracy CSV here")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="print classification measures of a model")
    p.add_argument("--model", required=True)
    _add_data(p)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--split", choices=("all", "train", "test"), default="all",
                   help="evaluate on every window or on one side of the seeded split")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("robustness", help="robustness of one signal")
    p.add_argument("--model", required=True)
    p.add_argument("--signal", required=True, help="CSV, one row per time step")
    p.add_argument("--classical", action="store_true", help="min/max semantics instead of weighted")
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--k", type=int, default=0, help="evaluation time (default 0)")
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("sparsify", help="prune operator weights")
    p.add_argument("--model", required=True)
    p.add_argument("--tau", type=float)
    p.add_argument("--top-sbar", type=int)
    p.add_argument("--gates", action="store_true", help="retrain the model's structure with gate variables")
    p.add_argument("--lambda1", type=float, default=0.0)
    p.add_argument("--lambda2", type=float, default=0.0)
    _add_data(p)
    _add_training(p)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="CSV report path")
    p.set_defaults(func=cmd_sparsify)

    p = sub.add_parser("check", help="run verification suites")
    p.add_argument("--grad", action="store_true")
    p.add_argument("--properties", action="store_true")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--instances", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("parse", help="validate a formula file and print it canonically")
    p.add_argument("--formula", required=True)
    p.add_argument("--dim", type=int, help="signal dimension (default: largest x index used)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("synth", help="write the synthetic separable dataset as CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-class", type=int, default=50)
    p.add_argument("--length", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as exc:
        code, category, msg = exc.code, exc.category, str(exc)
    except (DataError, InsufficientSignalError) as exc:
        code, category, msg = EXIT_DATA, "data", str(exc)
    except TrainingError as exc:
        code, category, msg = EXIT_DATA, "train", str(exc)
    except PruneError as exc:
        code, category, msg = EXIT_DATA, "prune", str(exc)
    except OSError as exc:
        code, category, msg = EXIT_DATA, "io", f"{exc.filename}: {exc.strerror}"
    except ValueError as exc:
        code, category, msg = EXIT_DATA, "data", str(exc)
    first, _, rest = msg.partition("\n")
    print(f"ERROR:{category}: {first}", file=sys.stderr)
    if rest:
        print(rest, file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
