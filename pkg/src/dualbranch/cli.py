"""Command-line entry point: ``dualbranch <subcommand> [options]``.

Every subcommand accepts ``--config FILE`` (JSON, see :mod:`dualbranch.config`),
``--seed N`` (run seed), ``--out DIR`` and any number of ``--set key=value``
overrides addressing RunConfig fields by dotted path.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .autodiff import save_raw
from .config import RunConfig, apply_overrides, load_config, save_config
from .data import Corpus, build_split, export_corpus, import_corpus
from .errors import CheckpointError, ConfigError, ContractError, IngestionError, TrainingError
from .spectral import DOMAINS, SPECTRAL_DOMAINS, fft2d, grayscale_array, log_magnitude, minmax_normalize, pixels_to_png, png_to_pixels

CONFIG_HELP = (
    "JSON object mirroring RunConfig: corpus, model, loss, optimizer, protocol, "
    "test_domains, ablation, epochs, batch_size, seed, output_dir. Sections may be partial."
)


def _common(p: argparse.ArgumentParser, out_required: bool = False) -> None:
    p.add_argument("--config", type=Path, help=CONFIG_HELP)
    p.add_argument("--seed", type=int, help="run seed (unsigned 64-bit); overrides the config")
    p.add_argument("--out", type=Path, required=out_required, help="output directory")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config field by dotted path, value parsed as JSON (repeatable), "
        "e.g. --set loss.lambda2=0 --set protocol.train_domain=I2I-like",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dualbranch",
        description="Dual-branch (RGB + spectrum) fake-image detector on a synthetic corpus.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("gen-corpus", help="generate the corpus split for the configured protocol and export it")
    _common(p, out_required=True)

    p = sub.add_parser("train", help="train one model; writes metrics.csv, report.json, config.json, checkpoint.bin")
    _common(p)
    p.add_argument("--corpus", type=Path, help="train/test on an exported corpus directory instead of generating one")

    p = sub.add_parser("eval", help="evaluate a checkpoint (read-only) and print accuracy and confusion counts")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True, help="checkpoint.bin written by train")
    p.add_argument("--corpus", type=Path, help="evaluate on the test split of an exported corpus directory")

    p = sub.add_parser("ablate", help="full model plus the three single-component ablations")
    _common(p)
    p.add_argument(
        "--domains", nargs="+", choices=DOMAINS, help="train one in-domain run per family (default: config protocol)"
    )
    p.add_argument("--jobs", type=int, default=1, help="concurrent training processes (default 1)")

    p = sub.add_parser("cross-domain", help="train/test matrix with the per-test-family cross-domain mean")
    _common(p)
    p.add_argument("--train-domains", nargs="+", choices=DOMAINS, default=list(SPECTRAL_DOMAINS))
    p.add_argument("--test-domains", nargs="+", choices=DOMAINS, default=list(DOMAINS))
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks; exit 1 on any failure")
    p.add_argument("--scope", nargs="+", choices=("ops", "losses", "model"), default=["ops", "losses", "model"])
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="also write the report to this directory")

    p = sub.add_parser("spectrum", help="dump a PNG's log-magnitude spectrum as PNG (normalized) and raw float64")
    p.add_argument("image", type=Path, help="input PNG")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--no-center", action="store_true", help="keep the DC bin at (0, 0)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output_dir={json.dumps(str(args.out))}")
    if overrides:
        config = apply_overrides(config, overrides)
    config.validate()
    return config


def _print_report(report) -> None:
    for d, c in report.domains.items():
        print(f"{d:<10} accuracy={c.accuracy:.4f} tp={c.tp} fp={c.fp} tn={c.tn} fn={c.fn}")
    print(f"wall_seconds={report.wall_seconds:.1f} config_hash={report.config_hash}")


def cmd_gen_corpus(args) -> int:
    config = resolve_config(args)
    split = build_split(Corpus(config.corpus), config.protocol)
    manifest = export_corpus(split, args.out)
    print(f"wrote {len(split.train)} train + {len(split.test)} test samples, manifest {manifest}")
    return 0


def cmd_train(args) -> int:
    from .training import train

    config = resolve_config(args)
    split = import_corpus(args.corpus) if args.corpus else None
    result = train(config, split=split)
    _print_report(result.report)
    if result.checkpoint:
        print(f"checkpoint {result.checkpoint}")
    return 0


def cmd_eval(args) -> int:
    from .training import evaluate, evaluation_sets

    config = resolve_config(args)
    if args.corpus:
        samples = import_corpus(args.corpus).test
    else:
        samples = [s for group in evaluation_sets(config, Corpus(config.corpus)).values() for s in group]
    report = evaluate(config, args.checkpoint, samples)
    _print_report(report)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "eval_report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_ablate(args) -> int:
    from .experiments import run_ablation_suite

    config = resolve_config(args)
    report = run_ablation_suite(config, args.domains, jobs=args.jobs, output_dir=args.out)
    print(report.format_table())
    print(f"largest drop: {report.largest_drop()}")
    if args.out:
        save_config(config, args.out / "config.json")
    return 0


def cmd_cross_domain(args) -> int:
    from .experiments import cross_domain_matrix

    config = resolve_config(args)
    report = cross_domain_matrix(config, args.train_domains, args.test_domains, jobs=args.jobs, output_dir=args.out)
    print(report.format_table())
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import format_report, run_gradcheck

    results = run_gradcheck(args.scope, trials=args.trials, seed=args.seed)
    text = format_report(results)
    print(text)
    failed = [r.target for r in results if not r.passed]
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "gradcheck.txt").write_text(text + "\n", encoding="utf-8")
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return 1
    print(f"all {len(results)} targets passed")
    return 0


def cmd_spectrum(args) -> int:
    if not args.image.is_file():
        raise IngestionError(f"image not found: {args.image}")
    gray = grayscale_array(png_to_pixels(args.image))
    smap = log_magnitude(fft2d(gray), center_dc=not args.no_center)
    args.out.mkdir(parents=True, exist_ok=True)
    stem = args.image.stem
    png_path = args.out / f"{stem}_spectrum.png"
    raw_path = args.out / f"{stem}_spectrum.raw"
    pixels_to_png(minmax_normalize(smap.values), png_path)
    save_raw(raw_path, smap.values)
    print(f"wrote {png_path} and {raw_path}")
    return 0


COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "cross-domain": cmd_cross_domain,
    "gradcheck": cmd_gradcheck,
    "spectrum": cmd_spectrum,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, IngestionError, CheckpointError, ContractError, TrainingError) as exc:
        print(f"dualbranch {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
