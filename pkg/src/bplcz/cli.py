"""Command-line entry point: ``bplcz {synth,ingest,train,eval,prompts,bands}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .bands import band_table_hash, default_band_groups, format_band_table
from .data import DataError, balanced_subsample, load_so2sat, load_split, make_synthetic, save_split, write_so2sat
from .model import CheckpointError, load_checkpoint, save_checkpoint
from .prompts import DescriptionFileError, default_catalog
from .training import TrainConfig, TrainingDiverged, evaluate, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3

log = logging.getLogger("bplcz")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_train_flags(p):
    d = TrainConfig()
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--lr", type=float, default=d.learning_rate, dest="learning_rate")
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--momentum", type=float, default=d.momentum)
    p.add_argument("--weight-decay", type=float, default=d.weight_decay)
    p.add_argument("--alpha", type=float, default=d.alpha)
    p.add_argument("--beta", type=float, default=d.beta)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--embed-dim", type=int, default=d.embed_dim)
    p.add_argument("--hidden", type=int, default=None, help="hidden width of the classifier (default: linear)")
    p.add_argument("--no-bgp", action="store_true", help="drop the band-prompt contrastive branch")
    p.add_argument("--no-msm", action="store_true", help="use the identity (diagonal) contrastive target")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bplcz", description=__doc__)
    parser.add_argument("--version", action="version", version=f"bplcz {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset in So2Sat container layout")
    p.add_argument("--classes", type=int, default=17)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=47)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("ingest", help="build and cache a class-balanced train/test split")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--per-class", type=int, default=1306)
    p.add_argument("--test-size", type=int, default=12117)
    p.add_argument("--seed", type=int, default=47)
    p.add_argument("--classes", type=int, default=17)
    p.add_argument("--out", type=Path, required=True, help="split path (.npz, plus .txt provenance)")

    p = sub.add_parser("train", help="train a model on a cached split")
    p.add_argument("--split", type=Path)
    p.add_argument("--out", type=Path, required=True, help="run directory")
    p.add_argument("--from-manifest", type=Path, help="reuse the configuration of an earlier run")
    _add_train_flags(p)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--split", type=Path, required=True)
    p.add_argument("--subset", choices=("test", "train"), default="test")
    p.add_argument("--out", type=Path, help="report file (default: stdout only)")
    p.add_argument("--emit-confusion", type=Path, metavar="PNG")
    p.add_argument("--emit-projection", type=Path, metavar="PNG")
    p.add_argument("--projection-per-class", type=int, default=70)

    p = sub.add_parser("prompts", help="dump every (class, band group) prompt")
    p.add_argument("--descriptions", type=Path, help="class_id<TAB>description file")
    p.add_argument("--out", type=Path)

    p = sub.add_parser("bands", help="export the band-group table")
    p.add_argument("--out", type=Path)
    return parser


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def cmd_synth(args):
    try:
        samples = make_synthetic(args.classes, args.per_class, args.noise, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    write_so2sat(samples, args.out)
    print(f"wrote {len(samples)} samples to {args.out}")


def cmd_ingest(args):
    dataset = load_so2sat(args.input)
    split = balanced_subsample(dataset, args.per_class, args.test_size, args.seed,
                               class_count=args.classes, source=str(args.input))
    path = save_split(split, args.out)
    print(f"train {len(split.train)} / test {len(split.test)} -> {path}")


def _config_from_args(args) -> TrainConfig:
    if args.from_manifest is not None:
        manifest = json.loads(args.from_manifest.read_text())
        return TrainConfig(**manifest["config"])
    return TrainConfig(
        epochs=args.epochs, learning_rate=args.learning_rate, batch_size=args.batch_size,
        momentum=args.momentum, weight_decay=args.weight_decay, alpha=args.alpha, beta=args.beta,
        seed=args.seed, use_bgp=not args.no_bgp, use_msm=not args.no_msm, embed_dim=args.embed_dim,
        hidden=args.hidden,
    )


def run_manifest(cfg: TrainConfig, split, split_path: Path, model) -> dict:
    return {
        "config": cfg.to_dict(),
        "dataset": {"split": str(split_path), "train_digest": split.train.digest(), **split.provenance},
        "band_table_hash": band_table_hash(model.groups),
        "prompt_catalog_hash": model.catalog.digest(),
        "version": f"bplcz {__version__}",
    }


def cmd_train(args):
    try:
        cfg = _config_from_args(args)
    except (TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid training configuration: {exc}") from exc
    split_path = args.split
    if split_path is None and args.from_manifest is not None:
        split_path = Path(json.loads(args.from_manifest.read_text())["dataset"]["split"])
    if split_path is None:
        raise UsageError("--split is required")
    split = load_split(split_path)
    result = train(split, cfg, on_epoch=lambda r: log.info(r.line()))
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    manifest = run_manifest(cfg, split, split_path, result.model)
    save_checkpoint(result.model, out / "checkpoint.pt", extra={"run": manifest})
    result.write_log(out / "train_log.csv")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    last = result.log[-1].line() if result.log else "no epochs run"
    print(f"{last}\nwrote {out / 'checkpoint.pt'}")


def cmd_eval(args):
    model, _ = load_checkpoint(args.checkpoint)
    split = load_split(args.split)
    samples = getattr(split, args.subset)
    if len(samples) == 0:
        raise DataError(f"{args.split}: {args.subset} set is empty")
    report = evaluate(model, samples)
    text = report.to_text()
    if args.out is not None:
        report.save(args.out)
    print(f"OA={report.overall_accuracy:.6f} kappa={report.kappa:.6f}" + (f" -> {args.out}" if args.out else ""))
    if args.emit_confusion is not None:
        from .figures import emit_confusion_figure
        emit_confusion_figure(report, args.emit_confusion)
    if args.emit_projection is not None:
        from .figures import emit_embedding_projection
        emit_embedding_projection(model, samples, args.emit_projection, per_class=args.projection_per_class)
    if args.out is None and args.verbose:
        sys.stdout.write(text)


def cmd_prompts(args):
    catalog = default_catalog(description_file=args.descriptions)
    _emit(catalog.dump(), args.out)


def cmd_bands(args):
    _emit(format_band_table(default_band_groups()), args.out)


COMMANDS = {
    "synth": cmd_synth, "ingest": cmd_ingest, "train": cmd_train,
    "eval": cmd_eval, "prompts": cmd_prompts, "bands": cmd_bands,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"bplcz: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"bplcz: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, CheckpointError, DescriptionFileError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"bplcz: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
