"""Command-line entry point: ``mhnn <command> ...``.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
Every random draw derives from ``--seed``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import datasets, wavelet
from .config import load_config
from .datasets import CsvSchema, PerturbationSpec
from .model import MHNN, load_model, save_model
from .sweeps import SWEEP_KINDS, SweepSpec, rows_to_csv, sweep
from .training import Splits, TrainConfig, TrainingDiverged, evaluate, prepare_splits, train

log = logging.getLogger("mhnn")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    return [int(v) for v in _floats(text)]


def _strs(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _write_text(path, text: str) -> None:
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master random seed")
    common.add_argument("--config", default=argparse.SUPPRESS, help="experiment config JSON")
    common.add_argument("--precision", type=int, choices=(32, 64), default=argparse.SUPPRESS)
    common.add_argument("--paper-protocol", action="store_true", default=argparse.SUPPRESS,
                        help="select the best epoch on the test split instead of a held-out validation split")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="mhnn", parents=[common],
                                     description="Wavelet multi-branch HAR network: data, training and robustness sweeps.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic window set")
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-class", type=int, default=64)
    p.add_argument("--channels", type=int, default=6)
    p.add_argument("--length", type=int, default=64)
    p.add_argument("--classes", type=int, default=4)

    p = sub.add_parser("import", parents=[common], help="convert a CSV file to the binary window format")
    p.add_argument("--csv", required=True)
    p.add_argument("--format", choices=("wide", "long"), default="wide")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int)
    p.add_argument("--class-names", type=_strs)
    p.add_argument("--sample-rate", type=float, default=1.0)
    p.add_argument("--width", type=int, help="window width for long format")
    p.add_argument("--overlap", type=float, default=0.5)

    p = sub.add_parser("decompose", parents=[common], help="write the wavelet components of one window as CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", parents=[common], help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--history", help="history JSON path (default: history.json beside the checkpoint)")

    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--perturb", choices=("none", "noise", "mask_fixed", "mask_random"), default="none")
    p.add_argument("--snr", type=float)
    p.add_argument("--ratio", type=float)
    p.add_argument("--out", help="report JSON path (default: stdout)")

    p = sub.add_parser("sweep", parents=[common], help="run a robustness, ablation or sensitivity sweep")
    p.add_argument("kind", choices=SWEEP_KINDS)
    p.add_argument("--data", required=True)
    p.add_argument("--model", help="trained checkpoint for noise/missing sweeps")
    p.add_argument("--snrs", type=_floats)
    p.add_argument("--ratios", type=_floats)
    p.add_argument("--kinds", type=_strs, help="mask kinds, e.g. mask_fixed,mask_random")
    p.add_argument("--variants", type=_strs)
    p.add_argument("--levels", type=_ints)
    p.add_argument("--modes", type=_strs)
    p.add_argument("--out", help="CSV path (default: stdout)")

    p = sub.add_parser("report", parents=[common], help="render a sweep CSV or report JSON as a table")
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    return parser


def _splits_for_checkpoint(ws: datasets.LabeledWindowSet, header: dict) -> Splits:
    cfg = TrainConfig.from_dict(header["train"])
    splits = prepare_splits(ws, cfg)
    mean, std = np.array(header["norm_mean"]), np.array(header["norm_std"])
    if not (np.array_equal(mean, splits.mean) and np.array_equal(std, splits.std)):
        raise ValueError("data set does not match the checkpoint's training data")
    return splits


def cmd_synth(args, exp) -> int:
    ws = datasets.synth_generate(args.n_per_class, args.channels, args.length, args.classes, exp.train.seed)
    datasets.save_binary(ws, args.out)
    return 0


def cmd_import(args, exp) -> int:
    schema = CsvSchema(format=args.format, n_classes=args.classes, class_names=args.class_names,
                       sample_rate_hz=args.sample_rate, width=args.width, overlap=args.overlap)
    datasets.save_binary(datasets.load_csv(args.csv, schema), args.out)
    return 0


def cmd_decompose(args, exp) -> int:
    ws = datasets.load_binary(args.data)
    if not 0 <= args.index < ws.n_windows:
        raise ValueError(f"index {args.index} outside [0, {ws.n_windows})")
    dtype = np.float32 if exp.train.precision == 32 else np.float64
    pyramid = wavelet.mdwd(ws.windows[args.index].astype(dtype), wavelet.haar_filters(), args.levels)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, comp in pyramid.components().items():
        with open(out / f"{name}.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            for row in comp:
                writer.writerow([repr(float(v)) for v in row])
    return 0


def cmd_train(args, exp) -> int:
    ws = datasets.load_binary(args.data)
    mcfg = exp.model_config(ws.n_channels, ws.window_length, ws.n_classes)
    splits = prepare_splits(ws, exp.train)
    result = train(mcfg, splits.train, splits.val, exp.train)
    test_report = evaluate(result.model, splits.test, seed=exp.train.seed)
    meta = {
        "train": exp.train.to_dict(),
        "norm_mean": splits.mean.tolist(),
        "norm_std": splits.std.tolist(),
        "best_epoch": result.best_epoch,
        "class_names": ws.class_names,
        "channel_names": ws.channel_names,
    }
    save_model(args.out, result.model, meta)
    history_path = Path(args.history) if args.history else Path(args.out).parent / "history.json"
    history_path.write_text(_dump_json({
        "best_epoch": result.best_epoch,
        "best_val_accuracy": result.best_val_accuracy,
        "epochs": result.history,
        "test": test_report.to_dict(),
    }))
    return 0


def _load(args, exp) -> tuple[MHNN, dict]:
    dtype = np.float32 if exp.train.precision == 32 else np.float64
    return load_model(args.model, dtype=dtype)


def cmd_eval(args, exp) -> int:
    model, header = _load(args, exp)
    ws = datasets.load_binary(args.data)
    splits = _splits_for_checkpoint(ws, header)
    target = {"train": splits.train, "val": splits.val, "test": splits.test}.get(args.split)
    if target is None:
        target = datasets.apply_standardization(ws, splits.mean, splits.std)
    pert = None
    if args.perturb == "noise":
        pert = PerturbationSpec("noise", snr_db=args.snr, seed=exp.train.seed)
    elif args.perturb != "none":
        pert = PerturbationSpec(args.perturb, ratio=args.ratio, seed=exp.train.seed)
    report = evaluate(model, target, pert, seed=exp.train.seed)
    _write_text(args.out, report.to_json() + "\n")
    return 0


def cmd_sweep(args, exp) -> int:
    ws = datasets.load_binary(args.data)
    overrides = {
        "snr_levels": args.snrs, "mask_ratios": args.ratios, "mask_kinds": args.kinds,
        "variants": args.variants, "sensitivity_levels": args.levels, "sensitivity_modes": args.modes,
    }
    spec = SweepSpec(**{**exp.sweep.to_dict(), **{k: v for k, v in overrides.items() if v is not None}})
    model, splits, tcfg = None, None, exp.train
    if args.model:
        model, header = _load(args, exp)
        splits = _splits_for_checkpoint(ws, header)
        tcfg = TrainConfig.from_dict({**header["train"], "seed": exp.train.seed, "precision": exp.train.precision})
        base = model.config
    else:
        base = exp.model_config(ws.n_channels, ws.window_length, ws.n_classes)
    rows = sweep(args.kind, spec, ws, tcfg, base=base, model=model, splits=splits)
    _write_text(args.out, rows_to_csv(rows))
    return 0


def _markdown_table(header: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(r) + " |" for r in rows]
    return "\n".join(lines) + "\n"


def cmd_report(args, exp) -> int:
    path = Path(args.input)
    text = path.read_text()
    if path.suffix == ".csv":
        rows = list(csv.reader(text.splitlines()))
        cols = ["cell", "accuracy_pct", "precision_pct", "recall_pct", "f1_pct"]
        idx = [rows[0].index(c) for c in cols]
        body = [[r[i] for i in idx] for r in rows[1:]]
        out = _markdown_table(["cell", "A (%)", "P (%)", "R (%)", "F1 (%)"], body)
    else:
        rep = json.loads(text)
        if "epochs" in rep:
            rep = rep["test"]
        avg = next(k.split("_")[0] for k in rep if k.endswith("_f1") and k != "f1")
        out = _markdown_table(
            ["metric", "value"],
            [["accuracy", f"{rep['accuracy']:.4f}"]]
            + [[k, f"{rep[f'{avg}_{k}']:.4f}"] for k in ("precision", "recall", "f1")],
        )
        out += "\n" + _markdown_table(
            ["class", "precision", "recall", "f1", "support"],
            [[c["class"], f"{c['precision']:.4f}", f"{c['recall']:.4f}", f"{c['f1']:.4f}", str(c["support"])]
             for c in rep["per_class"]],
        )
    _write_text(args.out, out)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "import": cmd_import,
    "decompose": cmd_decompose,
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        exp = load_config(getattr(args, "config", None), getattr(args, "seed", None),
                          getattr(args, "precision", None), getattr(args, "paper_protocol", None))
        return COMMANDS[args.command](args, exp)
    except (ValueError, OSError, KeyError, TrainingDiverged) as exc:
        print(f"mhnn {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
