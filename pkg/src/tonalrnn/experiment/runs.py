"""Single training runs and run matrices (kinds x orderings x folds)."""
from __future__ import annotations

import logging
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .. import __version__
from ..corpus import load_pieces, make_folds, piecewise_shuffle
from ..dsp import CqtConfig, ShepardConfig
from ..probetone import ProbeConfig, load_context_library, load_kk_reference, run_probe_tone
from ..trainer import (ObjectiveConfig, TrainConfig, calibrate_epsilon,
                       train_model, transition_changes)
from .persistence import file_sha256, save_checkpoint, write_manifest

__all__ = ["RunSpec", "RunResult", "run_training", "run_matrix", "spec_from_manifest",
           "shuffle_seed", "select_fold", "ORDERINGS"]

log = logging.getLogger(__name__)

ORDERINGS = ("original", "shuffled")


@dataclass(frozen=True)
class RunSpec:
    dataset: str
    kind: str
    ordering: str = "original"
    fold: int = 0
    dataset_id: str = ""
    n_folds: int = 5
    train_fraction: float = 0.8
    fold_seed: int = 0
    objective: ObjectiveConfig = ObjectiveConfig()
    train: TrainConfig = TrainConfig()
    probe: ProbeConfig = ProbeConfig()
    contexts: Optional[str] = None
    kk: Optional[str] = None
    run_probetone: bool = True

    def __post_init__(self):
        if self.ordering not in ORDERINGS:
            raise ValueError(f"ordering must be one of {ORDERINGS}")
        if not 0 <= self.fold < self.n_folds:
            raise ValueError(f"fold {self.fold} out of range for {self.n_folds} folds")

    @property
    def name(self) -> str:
        did = self.dataset_id or Path(self.dataset).name
        return f"{did}_{self.kind}_{self.ordering}_f{self.fold}_s{self.train.seed}"


@dataclass
class RunResult:
    checkpoint: Path
    manifest_path: Path
    manifest: dict = field(default_factory=dict)


def shuffle_seed(run_seed: int, piece_id: str) -> int:
    return (run_seed * 1_000_003 + zlib.crc32(piece_id.encode())) % 2 ** 32


def select_fold(spec: RunSpec):
    pieces, cqt = load_pieces(spec.dataset)
    by_id = {p.piece_id: p for p in pieces}
    folds = make_folds(sorted(by_id), spec.n_folds, spec.train_fraction, spec.fold_seed)
    split = folds[spec.fold]
    train = [by_id[i] for i in split.train_ids]
    test = [by_id[i] for i in split.test_ids]
    if spec.ordering == "shuffled":
        train = [piecewise_shuffle(p, shuffle_seed(spec.train.seed, p.piece_id)) for p in train]
    return split, train, test, cqt


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_training(spec: RunSpec, out_dir) -> RunResult:
    """Train one model, save its best checkpoint and a manifest next to it."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    split, train, test, cqt = select_fold(spec)
    if cqt != spec.probe.cqt:
        raise ValueError(f"dataset CQT config {cqt} differs from probe CQT config {spec.probe.cqt}")
    changes = transition_changes(train)
    objective = spec.objective
    if objective.epsilon is None:
        objective = replace(objective, epsilon=calibrate_epsilon(changes, objective.quantile))
    log.info("%s: %d train / %d test pieces, epsilon %.6g", spec.name, len(train), len(test),
             objective.epsilon)
    params, report = train_model(spec.kind, train, test, objective, spec.train)

    ckpt_path = out / f"{spec.name}.ckpt"
    manifest_path = out / f"{spec.name}.manifest.json"
    save_checkpoint(ckpt_path, params, manifest=manifest_path.name)

    probe = {}
    if spec.run_probetone:
        res = run_probe_tone(params, load_context_library(spec.contexts),
                             load_kk_reference(spec.kk), spec.probe)
        probe = {"r_major": res.r_major, "r_minor": res.r_minor,
                 "r_major_by_key": res.r_major_by_key, "r_minor_by_key": res.r_minor_by_key,
                 "profiles": {m: p.values for m, p in res.mode_profiles.items()}}

    manifest = {
        "format": "tonalrnn-run/1",
        "package_version": __version__,
        "name": spec.name,
        "dataset": str(spec.dataset),
        "dataset_id": spec.dataset_id or Path(spec.dataset).name,
        "kind": spec.kind,
        "ordering": spec.ordering,
        "fold": spec.fold,
        "folds": {"n_folds": spec.n_folds, "train_fraction": spec.train_fraction,
                  "seed": spec.fold_seed, "train_ids": list(split.train_ids),
                  "test_ids": list(split.test_ids)},
        "config": {"cqt": asdict(cqt),
                   "objective": asdict(objective),
                   "objective_requested": asdict(spec.objective),
                   "train": asdict(spec.train),
                   "shepard": asdict(spec.probe.shepard),
                   "probe": {"sample_rate": spec.probe.sample_rate,
                             "probe_duration": spec.probe.probe_duration},
                   "contexts": spec.contexts, "kk": spec.kk,
                   "run_probetone": spec.run_probetone},
        "seeds": {"train": spec.train.seed, "folds": spec.fold_seed,
                  "shuffle": {p.piece_id: p.shuffle_seed for p in train if p.shuffled}},
        "epsilon_check": {"transitions": int(changes.size),
                          "fraction_at_or_below": float(np.mean(changes <= objective.epsilon))},
        "train_report": report.to_dict(),
        "test_mce": report.best_test_mce,
        "r_major": probe.get("r_major"),
        "r_minor": probe.get("r_minor"),
        "r_major_by_key": probe.get("r_major_by_key"),
        "r_minor_by_key": probe.get("r_minor_by_key"),
        "profiles": probe.get("profiles"),
        "checkpoint": ckpt_path.name,
        "checkpoint_sha256": file_sha256(ckpt_path),
        "started": started,
        "finished": _now(),
    }
    write_manifest(manifest_path, manifest)
    return RunResult(ckpt_path, manifest_path, manifest)


def spec_from_manifest(manifest: dict) -> RunSpec:
    """Rebuild the RunSpec that produced ``manifest``."""
    cfg = manifest["config"]
    probe = ProbeConfig(ShepardConfig(**cfg["shepard"]), CqtConfig(**cfg["cqt"]),
                        cfg["probe"]["sample_rate"], cfg["probe"]["probe_duration"])
    folds = manifest["folds"]
    return RunSpec(
        dataset=manifest["dataset"], kind=manifest["kind"], ordering=manifest["ordering"],
        fold=manifest["fold"], dataset_id=manifest["dataset_id"], n_folds=folds["n_folds"],
        train_fraction=folds["train_fraction"], fold_seed=folds["seed"],
        objective=ObjectiveConfig(**cfg["objective_requested"]),
        train=TrainConfig(**cfg["train"]), probe=probe, contexts=cfg["contexts"],
        kk=cfg["kk"], run_probetone=cfg["run_probetone"])


def _run_one(args):
    spec, out_dir = args
    res = run_training(spec, out_dir)
    return res.checkpoint, res.manifest_path


def run_matrix(specs: Sequence[RunSpec], out_dir, jobs: int = 1) -> list[tuple[Path, Path]]:
    """Run independent trainings, in parallel processes when ``jobs > 1``."""
    work = [(s, out_dir) for s in specs]
    if jobs <= 1:
        return [_run_one(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_one, work))
