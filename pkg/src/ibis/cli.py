"""Command-line entry point: ``ibis <command> [options]``.

Exit codes: 0 success, 1 architecture-check failure, 2 configuration error,
3 I/O or format error, 4 missing upstream artifact.

Every command accepts ``--config FILE`` with ``key = value`` lines (keys are
the long option names, ``-`` or ``_`` both allowed).  Flags given on the
command line override the file.  ``IBIS_SEED`` supplies the seed when
neither sets one.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from ibis.data import SPLIT_CODES, SynthConfig, generate_synthetic_dataset, load_dataset, save_dataset, split_dataset
from ibis.errors import ConfigurationError, FormatError, InputError, MissingArtifactError
from ibis.evaluation import REPORT_SCHEMA_VERSION
from ibis.model import ARCHITECTURES, TrainConfig, build_model, extract_features, parameter_report
from ibis.pipeline import (
    antenna_ids,
    evaluate,
    export_reports,
    fit_svms,
    load_models,
    svm_path,
    train_antennas,
)
from ibis.svm import SvmConfig, decision_region_grid, fit_region_classifier, pca_fit

EXIT_OK, EXIT_ARCH, EXIT_CONFIG, EXIT_IO, EXIT_MISSING = 0, 1, 2, 3, 4
DEFAULT_SEEDS = {"synth": 7, "train": 0}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _gamma(text: str):
    if text == "scale":
        return "scale"
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gamma must be 'scale' or a number, got {text!r}") from None


def _ratios(text: str) -> tuple[float, float, float]:
    try:
        parts = tuple(float(p) for p in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"ratios must be three comma-separated numbers, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"ratios must be three comma-separated numbers, got {text!r}")
    return parts


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ibis", description="Doppler activity recognition pipeline.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_):
        p = sub.add_parser(name, help=help_, description=help_)
        p.add_argument("--config", help="key = value file; command-line flags take precedence")
        return p

    p = command("synth", "generate a synthetic dataset file")
    p.add_argument("--classes", type=int, default=5, help="5 or 8")
    p.add_argument("--per-class", type=int, default=100, help="windows per class per antenna")
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--outlier-rate", type=float, default=0.1)
    p.add_argument("--ratios", type=_ratios, default=(0.8, 0.1, 0.1), help="train,val,test fractions")
    p.add_argument("--seed", type=int, help="generation and split seed (default 7)")
    p.add_argument("--out", required=True, help="output IBDS file")

    p = command("train", "train one model per antenna")
    p.add_argument("--data", required=True, help="IBDS dataset file")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--arch", choices=ARCHITECTURES, default="ibis")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, help="base seed; antenna a uses seed + a (default 0)")

    p = command("svm-fit", "fit one RBF SVM per antenna on penultimate features")
    p.add_argument("--data", required=True)
    p.add_argument("--models", required=True, help="checkpoint directory")
    p.add_argument("--out", help="SVM directory (default: the checkpoint directory)")
    p.add_argument("--c", type=float, default=1.0, help="penalty parameter")
    p.add_argument("--gamma", type=_gamma, default="scale")
    p.add_argument("--kernel", choices=("rbf", "linear"), default="rbf")
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.add_argument("--class-weighting", choices=("balanced", "none"), default="balanced")

    p = command("eval", "evaluate the test split pre- and post-fusion")
    p.add_argument("--data", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--svm", help="SVM directory; omit to evaluate the network alone")
    p.add_argument("--out", required=True, help="report directory")

    p = command("region-plot", "write 2-D PCA decision-region CSVs")
    p.add_argument("--data", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--svm", required=True, help="SVM directory")
    p.add_argument("--antenna", type=int, default=0)
    p.add_argument("--resolution", type=int, default=100)
    p.add_argument("--out", required=True, help="output directory")

    p = command("arch-check", "compare the built network with the reference layer table")
    p.add_argument("--classes", type=int, default=5)
    return parser


# ---------------------------------------------------------------------------
# config file merging


def read_config_file(path) -> list[tuple[str, str]]:
    pairs = []
    for n, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{n}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        pairs.append((key.replace("_", "-"), value))
    return pairs


def _find_config(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def merge_config(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Splice ``--config`` entries in front of the command's own flags.

    argparse keeps the last occurrence of an option, so explicit flags win.
    """
    path = _find_config(argv)
    if path is None:
        return argv
    commands = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)][0].choices
    pos = next((i for i, tok in enumerate(argv) if tok in commands), None)
    if pos is None:
        return argv
    sub = commands[argv[pos]]
    known = {s[2:]: a for a in sub._actions for s in a.option_strings if s.startswith("--")}
    extra = []
    for key, value in read_config_file(path):
        if key not in known or key in ("config", "help"):
            raise ConfigurationError(f"unknown key {key!r} in {path} for command {argv[pos]!r}")
        extra += [f"--{key}", value]
    return argv[: pos + 1] + extra + argv[pos + 1 :]


def resolve_seed(value: int | None, command: str) -> int:
    if value is not None:
        return value
    env = os.environ.get("IBIS_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigurationError(f"IBIS_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEEDS[command]


# ---------------------------------------------------------------------------
# commands


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"{what} not found: {p}")
    return p


def cmd_synth(args) -> int:
    cfg = SynthConfig(args.classes, args.per_class, args.noise, resolve_seed(args.seed, "synth"), args.outlier_rate)
    ds = generate_synthetic_dataset(cfg)
    split_dataset(ds, args.ratios, cfg.seed)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} windows ({cfg.classes} classes x {cfg.windows_per_class} x 4 antennas) to {args.out}")
    names = list(SPLIT_CODES)
    print("class".ljust(12) + "".join(n.rjust(7) for n in names + ["total"]))
    for k, cname in enumerate(ds.class_names):
        counts = [int(np.sum((ds.labels == k) & (ds.split == SPLIT_CODES[n]))) for n in names]
        print(cname.ljust(12) + "".join(str(c).rjust(7) for c in counts + [sum(counts)]))
    return EXIT_OK


def cmd_train(args) -> int:
    ds = load_dataset(_require_file(args.data, "dataset"))
    cfg = TrainConfig(args.epochs, args.batch_size, resolve_seed(args.seed, "train"), args.lr)
    logs = train_antennas(ds, args.out, args.arch, cfg)
    print(f"{'antenna':>7} {'epochs':>6} {'mean s/epoch':>12} {'train acc':>9} {'val acc':>8}")
    for a, lg in logs.items():
        last = lg.records[-1]
        mean_s = np.mean([r.seconds for r in lg.records])
        print(f"{a:>7} {len(lg):>6} {mean_s:>12.3f} {last.train_accuracy:>9.3f} {last.val_accuracy:>8.3f}")
    print(f"checkpoints and training_log.csv written to {args.out}")
    return EXIT_OK


def cmd_svm_fit(args) -> int:
    cfg = SvmConfig(C=args.c, gamma=args.gamma, kernel=args.kernel, tolerance=args.tolerance,
                    class_weighting=args.class_weighting)
    cfg.validate()
    ds = load_dataset(_require_file(args.data, "dataset"))
    out = args.out or args.models
    print(f"C = {float(cfg.C)}  gamma = {cfg.gamma}  kernel = {cfg.kernel}  weighting = {cfg.class_weighting}")
    svms = fit_svms(ds, args.models, out, cfg)
    for a, model in svms.items():
        n_train = int(np.sum((ds.antennas == a) & (ds.split == SPLIT_CODES["train"])))
        counts = " ".join(f"{m.positive}v{m.negative}:{len(m.dual_coef)}" for m in model.machines)
        print(f"antenna {a}: gamma {model.gamma:.4g}, {n_train} training windows, support vectors {counts}")
    print(f"SVM models written to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ds = load_dataset(_require_file(args.data, "dataset"))
    reports = evaluate(ds, args.models, args.svm)
    dirs = export_reports(reports, args.out)
    print(f"{'mode':<13}{'accuracy':>9}{'f1':>8}{'recall':>8}{'precision':>10}")
    for mode, r in reports.items():
        print(f"{mode:<13}{r.accuracy:>9.2f}{r.macro_f1:>8.2f}{r.macro_recall:>8.2f}{r.macro_precision:>10.2f}")
    print(f"reports (schema {REPORT_SCHEMA_VERSION}) written to {', '.join(str(d) for d in dirs.values())}")
    return EXIT_OK


def cmd_region_plot(args) -> int:
    ds = load_dataset(_require_file(args.data, "dataset"))
    if args.antenna not in antenna_ids(ds):
        raise ConfigurationError(f"antenna {args.antenna} is not in the dataset")
    if not svm_path(args.svm, args.antenna).is_file():
        raise MissingArtifactError(f"SVM model for antenna {args.antenna} not found in {args.svm}")
    model = load_models(args.models, [args.antenna])[args.antenna]
    part = ds.antenna(args.antenna).part("test")
    feats = extract_features(model, part.values)
    pca = pca_fit(feats, 2)
    grid = decision_region_grid(fit_region_classifier(feats, part.labels, pca), pca, feats, part.labels,
                                resolution=args.resolution)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid.write_csv(out / "region_grid.csv", out / "region_points.csv")
    present = np.unique(grid.labels)
    print(f"grid {args.resolution}x{args.resolution}, labels present: {present.tolist()}; "
          f"explained variance {pca.explained_variance.round(4).tolist()}")
    return EXIT_OK


def cmd_arch_check(args) -> int:
    if args.classes not in (5, 8):
        raise ConfigurationError(f"classes must be one of {{5, 8}}, got {args.classes}")
    rows, totals = parameter_report(build_model("ibis", args.classes, 0))
    fmt = "{:<32} {:<24} {:<24} {:>5} {:>8} {:>8}  {}"
    print(fmt.format("layer", "shape", "reference", "ok", "params", "ref", "count"))
    for r in rows:
        shape = " ".join(str(s) for s in r.shapes)
        expected = " ".join(str(s) for s in r.expected_shapes)
        params = "" if r.params is None else str(r.params)
        table = "" if r.expected_params is None else str(r.expected_params)
        status = r.count_status + (f" ({r.note})" if r.note else "")
        print(fmt.format(r.label, shape, expected, "yes" if r.shape_ok else "NO", params, table, status))
    print(f"shapes: {totals['shape_matches']}/{totals['shape_rows']} rows, "
          f"{totals['distinct_shape_matches']}/{totals['distinct_shapes']} distinct")
    print(f"counts: {totals['count_matches']} match, {totals['count_divergent']} documented divergences, "
          f"{totals['count_mismatches']} mismatches; trainable {totals['trainable']}, "
          f"non-trainable {totals['non_trainable']}")
    ok = totals["shape_matches"] == totals["shape_rows"] and totals["count_mismatches"] == 0
    return EXIT_OK if ok else EXIT_ARCH


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "svm-fit": cmd_svm_fit,
    "eval": cmd_eval,
    "region-plot": cmd_region_plot,
    "arch-check": cmd_arch_check,
}


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(merge_config(parser, argv))
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
        return COMMANDS[args.command](args)
    except (ConfigurationError, InputError) as exc:
        print(f"ibis: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"ibis: missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (OSError, FormatError) as exc:
        print(f"ibis: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
