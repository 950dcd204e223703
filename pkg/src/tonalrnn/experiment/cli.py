"""
Command-line interface.

Subcommands: ``synth-corpus``, ``ingest``, ``train``, ``probetone``,
``report`` and ``gradcheck``. Relative dataset and corpus paths that do not
exist locally are looked up under ``$TONALRNN_CORPUS_ROOT`` when it is set.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .. import __version__
from ..corpus import ingest_corpus, load_pieces, read_corpus_manifest, save_pieces
from ..dsp import CqtConfig, ShepardConfig
from ..probetone import ProbeConfig, load_context_library, load_kk_reference
from ..rnn import CELL_KINDS
from ..trainer import ObjectiveConfig, TrainConfig
from .gradcheck import gradient_check
from .persistence import read_manifest
from .probe import evaluate_checkpoint, write_probetone_outputs
from .report import write_report
from .runs import ORDERINGS, RunSpec, run_matrix, spec_from_manifest
from .synth import CorpusRecipe, load_recipe, synth_corpus

__all__ = ["main", "build_parser", "CORPUS_ROOT_ENV"]

CORPUS_ROOT_ENV = "TONALRNN_CORPUS_ROOT"
log = logging.getLogger("tonalrnn")


def resolve(path) -> Path:
    p = Path(path)
    root = os.environ.get(CORPUS_ROOT_ENV)
    if root and not p.is_absolute() and not p.exists():
        return Path(root) / p
    return p


# -- shared flag groups ------------------------------------------------------

def _add_cqt(parser):
    g = parser.add_argument_group("CQT")
    d = CqtConfig()
    g.add_argument("--f-min", type=float, default=d.f_min, help="lowest bin centre (Hz)")
    g.add_argument("--f-max", type=float, default=d.f_max, help="highest bin centre (Hz)")
    g.add_argument("--bins-per-octave", type=int, default=d.bins_per_octave)


def _cqt(args) -> CqtConfig:
    return CqtConfig(args.f_min, args.f_max, args.bins_per_octave)


def _add_shepard(parser):
    g = parser.add_argument_group("Shepard tones")
    d = ShepardConfig()
    g.add_argument("--shepard-components", type=int, default=d.component_count)
    g.add_argument("--shepard-band-low", type=float, default=d.band_low, help="Hz")
    g.add_argument("--shepard-amplitude", type=float, default=d.amplitude)
    g.add_argument("--shepard-ramp", type=float, default=d.ramp, help="onset/offset ramp (s)")


def _shepard(args) -> ShepardConfig:
    return ShepardConfig(args.shepard_components, args.shepard_band_low, args.shepard_amplitude,
                         args.shepard_ramp)


def _add_probe(parser):
    _add_shepard(parser)
    g = parser.add_argument_group("probe-tone protocol")
    d = ProbeConfig()
    g.add_argument("--contexts", default=None, help="context library JSON (default: bundled)")
    g.add_argument("--kk", default=None, help="KK reference JSON (default: bundled)")
    g.add_argument("--probe-sample-rate", type=int, default=d.sample_rate)
    g.add_argument("--probe-duration", type=float, default=d.probe_duration, help="seconds")


def _add_objective(parser):
    g = parser.add_argument_group("objective")
    d = ObjectiveConfig()
    g.add_argument("--beta", type=float, default=d.beta, help="weight of small-change transitions")
    g.add_argument("--epsilon", type=float, default=None,
                   help="change threshold (default: calibrated on the training fold)")
    g.add_argument("--quantile", type=float, default=d.quantile)
    g.add_argument("--output-clamp", type=float, default=d.output_clamp)


def _add_train(parser):
    g = parser.add_argument_group("training")
    d = TrainConfig()
    g.add_argument("--learning-rate", type=float, default=d.learning_rate)
    g.add_argument("--truncation", type=int, default=d.truncation)
    g.add_argument("--clip", type=float, default=d.clip)
    g.add_argument("--clip-mode", choices=("value", "norm"), default=d.clip_mode)
    g.add_argument("--batch-size", type=int, default=d.batch_size)
    g.add_argument("--seq-len", type=int, default=d.seq_len)
    g.add_argument("--patience", type=int, default=d.patience)
    g.add_argument("--max-epochs", type=int, default=d.max_epochs)
    g.add_argument("--rms-decay", type=float, default=d.rms_decay)
    g.add_argument("--rms-epsilon", type=float, default=d.rms_epsilon)
    g.add_argument("--hidden", type=int, default=d.n_hidden)
    g.add_argument("--seed", type=int, default=d.seed)


# -- subcommands -------------------------------------------------------------

def cmd_synth_corpus(args):
    recipe = load_recipe(args.recipe) if args.recipe else CorpusRecipe()
    overrides = {}
    for name in ("seed", "sample_rate", "tempo_bpm", "subdivision", "pieces_per_key",
                 "beats_per_piece", "melody_probability"):
        value = getattr(args, name)
        if value is not None:
            overrides[name] = value
    if args.modes:
        overrides["modes"] = tuple(args.modes)
    if args.keys:
        overrides["keys"] = tuple(args.keys)
    if args.phrase_weights:
        overrides["phrase_weights"] = json.loads(args.phrase_weights)
    recipe = replace(recipe, **overrides)
    entries = synth_corpus(args.out, recipe)
    print(f"wrote {len(entries)} pieces to {args.out}")


def cmd_ingest(args):
    manifest = resolve(args.manifest)
    root = args.root or os.environ.get(CORPUS_ROOT_ENV)
    entries = read_corpus_manifest(manifest, root)
    if args.subdivision is not None:
        entries = [replace(e, subdivision=args.subdivision) for e in entries]
    cqt = _cqt(args)
    pieces = ingest_corpus(entries, cqt, args.jobs)
    save_pieces(args.out, pieces, cqt)
    print(f"ingested {len(pieces)} pieces ({sum(len(p) for p in pieces)} frames) into {args.out}")


def _specs_from_args(args) -> list[RunSpec]:
    if args.from_manifest:
        return [spec_from_manifest(read_manifest(m)) for m in args.from_manifest]
    if not args.dataset:
        raise ValueError("train needs a dataset directory or --from-manifest")
    dataset = resolve(args.dataset)
    _, cqt = load_pieces(dataset)
    objective = ObjectiveConfig(args.beta, args.epsilon, args.quantile, args.output_clamp)
    probe = ProbeConfig(_shepard(args), cqt, args.probe_sample_rate, args.probe_duration)
    train = TrainConfig(args.learning_rate, args.truncation, args.clip, args.clip_mode,
                        args.batch_size, args.seq_len, args.patience, args.max_epochs,
                        args.rms_decay, args.rms_epsilon, args.hidden, args.seed)
    folds = args.fold if args.fold else list(range(args.n_folds))
    return [RunSpec(str(dataset), kind, ordering, fold, args.dataset_id or "", args.n_folds,
                    args.train_fraction, args.fold_seed, objective, train, probe, args.contexts,
                    args.kk, not args.no_probetone)
            for kind in (args.kind or ["gru"]) for ordering in (args.ordering or ["original"])
            for fold in folds]


def cmd_train(args):
    specs = _specs_from_args(args)
    log.info("running %d training job(s)", len(specs))
    for ckpt, manifest in run_matrix(specs, args.out, args.jobs):
        m = read_manifest(manifest)
        print(f"{m['name']}: test MCE {m['test_mce']:.4f}  r_major {m.get('r_major')}  "
              f"r_minor {m.get('r_minor')}  -> {ckpt}")


def cmd_probetone(args):
    library = load_context_library(args.contexts)
    kk = load_kk_reference(args.kk)
    fallback = ProbeConfig(_shepard(args), _cqt(args), args.probe_sample_rate, args.probe_duration)
    results = [evaluate_checkpoint(c, library, kk, fallback, not args.ignore_manifest)
               for c in args.checkpoints]
    write_probetone_outputs(results, library, kk, args.out, args.svg)
    for r in results:
        print(f"{r.name}: r_major {r.result.r_major:.4f}  r_minor {r.result.r_minor:.4f}")


def cmd_report(args):
    written = write_report(args.manifests, args.out, load_kk_reference(args.kk), args.svg)
    for path in written.values():
        print(path)


def cmd_gradcheck(args):
    worst_overall = 0.0
    for kind in args.kind or CELL_KINDS:
        errors = gradient_check(kind, args.n_in, args.hidden, args.steps, args.batch, args.seed,
                                args.step)
        worst = max(errors.values())
        worst_overall = max(worst_overall, worst)
        print(f"{kind:11s} max relative error {worst:.3e}  {'ok' if worst < args.tol else 'FAIL'}")
    if worst_overall >= args.tol:
        raise RuntimeError(f"gradient check failed (max relative error {worst_overall:.3e})")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tonalrnn",
        description="Train recurrent next-frame models on CQT spectrograms and run a "
                    "simulated probe-tone experiment on them.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", help="render a synthetic Shepard-tone corpus")
    p.add_argument("out", help="output directory")
    p.add_argument("--recipe", help="recipe JSON; flags below override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--sample-rate", type=int)
    p.add_argument("--tempo-bpm", type=float)
    p.add_argument("--subdivision", type=int, help="frames per beat written to the manifest")
    p.add_argument("--modes", nargs="+", choices=("major", "minor"))
    p.add_argument("--keys", nargs="+", type=int, help="tonic pitch classes 0..11")
    p.add_argument("--pieces-per-key", type=int)
    p.add_argument("--beats-per-piece", type=int)
    p.add_argument("--melody-probability", type=float)
    p.add_argument("--phrase-weights", help='JSON object, e.g. \'{"scale": 1, "cadence": 2}\'')
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("ingest", help="compute beat-synchronous CQT spectrograms")
    p.add_argument("manifest", help="corpus CSV (piece_id, audio, beats, subdivision)")
    p.add_argument("out", help="dataset directory to write")
    p.add_argument("--root", help=f"base for relative paths (default ${CORPUS_ROOT_ENV} or CSV folder)")
    p.add_argument("--subdivision", type=int, help="override the per-piece subdivision")
    p.add_argument("--jobs", type=int, default=1)
    _add_cqt(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train one model or a run matrix")
    p.add_argument("dataset", nargs="?", help="ingested dataset directory")
    p.add_argument("--out", required=True, help="directory for checkpoints and manifests")
    p.add_argument("--from-manifest", nargs="+", help="re-run from saved run manifests")
    p.add_argument("--dataset-id", help="label used in run names and reports")
    p.add_argument("--kind", nargs="+", choices=CELL_KINDS)
    p.add_argument("--ordering", nargs="+", choices=ORDERINGS)
    p.add_argument("--fold", nargs="+", type=int, help="fold indices (default: all)")
    p.add_argument("--n-folds", type=int, default=5)
    p.add_argument("--train-fraction", type=float, default=0.8)
    p.add_argument("--fold-seed", type=int, default=0)
    p.add_argument("--no-probetone", action="store_true", help="skip the probe-tone evaluation")
    p.add_argument("--jobs", type=int, default=1, help="parallel training processes")
    _add_objective(p)
    _add_train(p)
    _add_probe(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("probetone", help="run the probe-tone experiment on checkpoints")
    p.add_argument("checkpoints", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--svg", action="store_true", help="also write SVG figures")
    p.add_argument("--ignore-manifest", action="store_true",
                   help="use the flags even when a run manifest records stimulus settings")
    _add_cqt(p)
    _add_probe(p)
    p.set_defaults(func=cmd_probetone)

    p = sub.add_parser("report", help="summarize run manifests")
    p.add_argument("manifests", help="directory searched recursively for *.manifest.json")
    p.add_argument("--out", required=True)
    p.add_argument("--kk", default=None)
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck", help="compare BPTT gradients with finite differences")
    p.add_argument("--kind", nargs="+", choices=CELL_KINDS)
    p.add_argument("--n-in", type=int, default=8)
    p.add_argument("--hidden", type=int, default=5)
    p.add_argument("--steps", type=int, default=7)
    p.add_argument("--batch", type=int, default=3)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--step", type=float, default=1e-5, help="finite-difference step")
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        args.func(args)
    except (ValueError, OSError, KeyError, RuntimeError, json.JSONDecodeError) as exc:
        print(f"tonalrnn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
