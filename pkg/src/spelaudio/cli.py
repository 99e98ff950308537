"""Command-line interface.

Subcommands:
  preprocess  turn one WAV file into a mel-image .npy
  run         execute a full experiment from a config file
  sweep       run the (per_step, steps) grid from a config file
  evaluate    score a predictions CSV against a truth CSV
  mcnemar     paired McNemar test between two prediction CSVs
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError
from .dsp import StftConfig, mel_filterbank, preprocess
from .experiment import run_experiment, sweep
from .metrics import accuracy, lrap, mcnemar, uar, wlrap
from .wavio import WavFormatError, load_wav

__all__ = ["main"]


def _read_csv_matrix(path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(cell) for cell in line.split(",")])
        except ValueError:
            if lineno == 1:
                continue  # header row
            raise SystemExit(f"{path}:{lineno}: not numeric: {line!r}")
    if not rows:
        raise SystemExit(f"{path}: no data rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise SystemExit(f"{path}: ragged rows (widths {sorted(widths)})")
    return np.asarray(rows)


def _as_labels(matrix: np.ndarray) -> np.ndarray:
    """Single column -> class indices; multiple columns -> argmax per row."""
    if matrix.shape[1] == 1:
        return matrix[:, 0].astype(np.int64)
    return matrix.argmax(axis=1)


def _cmd_preprocess(args) -> int:
    signal = load_wav(args.wav)
    config = StftConfig(n_fft=args.n_fft, hop=args.hop, win_length=args.win_length)
    fb = mel_filterbank(args.mels, args.n_fft, signal.sample_rate, args.fmin, args.fmax)
    target = (
        int(round(args.clip_seconds * signal.sample_rate))
        if args.clip_seconds is not None
        else len(signal)
    )
    image = preprocess(signal, config, fb, target)
    np.save(args.out, image.values)
    print(f"{args.out}: mel image {image.values.shape[0]}x{image.values.shape[1]}")
    return 0


def _print_record(record) -> None:
    for report in record.reports:
        parts = [f"round {report.round_index}", f"pseudo {report.pseudo_count}"]
        for name, value in report.metrics.items():
            parts.append(f"{name} {value:.4f}")
        print("  " + "  ".join(parts))
    for label, metrics in (("baseline", record.baseline_metrics), ("final", record.final_metrics)):
        if metrics:
            print(f"{label}: " + "  ".join(f"{k} {v:.4f}" for k, v in metrics.items()))
    mc = record.mcnemar_vs_baseline
    if mc is not None:
        verdict = "significant" if mc.significant else "not significant"
        print(f"mcnemar vs baseline: statistic {mc.statistic:.4f} (b={mc.b}, c={mc.c}) {verdict} at 0.01")
    if record.output_dir is not None:
        print(f"results written to {record.output_dir}")


def _cmd_run(args) -> int:
    record = run_experiment(args.config)
    _print_record(record)
    return 0


def _cmd_sweep(args) -> int:
    results = sweep(args.config)
    for m, k, record in results:
        final = record.final_metrics.get(record.metric)
        shown = "n/a" if final is None else f"{final:.4f}"
        print(f"per_step {m:4d}  steps {k:2d}  final {record.metric} {shown}")
    print(f"{len(results)} grid points")
    return 0


def _cmd_evaluate(args) -> int:
    pred = _read_csv_matrix(args.predictions)
    truth = _read_csv_matrix(args.truth)
    if args.metric in ("accuracy", "uar"):
        truth_labels = _as_labels(truth)
        pred_labels = _as_labels(pred)
        if args.metric == "accuracy":
            value = accuracy(pred_labels, truth_labels)
        else:
            n_classes = args.classes or int(truth_labels.max()) + 1
            value = uar(pred_labels, truth_labels, n_classes)
    else:
        indicator = truth.astype(np.int64)
        value = lrap(pred, indicator) if args.metric == "lrap" else wlrap(pred, indicator)
    print(f"{args.metric} {value:.6f}")
    return 0


def _cmd_mcnemar(args) -> int:
    pred_a = _as_labels(_read_csv_matrix(args.pred_a))
    pred_b = _as_labels(_read_csv_matrix(args.pred_b))
    truth = _as_labels(_read_csv_matrix(args.truth))
    result = mcnemar(pred_a, pred_b, truth)
    verdict = "significant" if result.significant else "not significant"
    print(
        f"statistic {result.statistic:.6f}  b {result.b}  c {result.c}  "
        f"{verdict} at 0.01"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spelaudio", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="emit a mel image for one WAV file")
    p.add_argument("wav")
    p.add_argument("--out", required=True, help="output .npy path")
    p.add_argument("--n-fft", type=int, default=1024, dest="n_fft")
    p.add_argument("--hop", type=int, default=64)
    p.add_argument("--win-length", type=int, default=512, dest="win_length")
    p.add_argument("--mels", type=int, default=256)
    p.add_argument("--fmin", type=float, default=0.0)
    p.add_argument("--fmax", type=float, default=None)
    p.add_argument("--clip-seconds", type=float, default=None, dest="clip_seconds")
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("run", help="run a full experiment from a config file")
    p.add_argument("config")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="run the (per_step, steps) grid from a config file")
    p.add_argument("config")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("evaluate", help="score predictions CSV against truth CSV")
    p.add_argument("predictions")
    p.add_argument("truth")
    p.add_argument("--metric", required=True, choices=("accuracy", "uar", "lrap", "wlrap"))
    p.add_argument("--classes", type=int, default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("mcnemar", help="paired McNemar test between two prediction files")
    p.add_argument("pred_a")
    p.add_argument("pred_b")
    p.add_argument("truth")
    p.set_defaults(func=_cmd_mcnemar)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, WavFormatError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
