"""Probe-tone evaluation of saved checkpoints and its CSV/SVG outputs."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from ..dsp import CqtConfig, ShepardConfig
from ..probetone import ContextLibrary, KKReference, ProbeConfig, ProbeToneResult, run_probe_tone
from .persistence import load_checkpoint, read_manifest
from .report import write_csv

__all__ = ["CheckpointResult", "probe_config_for", "evaluate_checkpoint", "write_probetone_outputs",
           "CONTEXT_FIELDS", "MODE_FIELDS", "CORRELATION_FIELDS"]

CONTEXT_FIELDS = ["context", "mode", "probe", "kl", "fit"]
MODE_FIELDS = ["mode", "probe", "fit", "kk"]
CORRELATION_FIELDS = ["checkpoint", "kind", "ordering", "test_mce", "r_major", "r_minor",
                      "r_major_by_key", "r_minor_by_key"]


@dataclass
class CheckpointResult:
    name: str
    kind: str
    manifest: Optional[dict]
    result: ProbeToneResult


def _manifest_for(ckpt_path: Path, reference: str) -> Optional[dict]:
    if reference and (ckpt_path.parent / reference).exists():
        return read_manifest(ckpt_path.parent / reference)
    return None


def probe_config_for(manifest: Optional[dict], fallback: ProbeConfig) -> ProbeConfig:
    """Stimulus settings recorded in a run manifest, else ``fallback``."""
    if manifest is None:
        return fallback
    cfg = manifest["config"]
    return ProbeConfig(ShepardConfig(**cfg["shepard"]), CqtConfig(**cfg["cqt"]),
                       cfg["probe"]["sample_rate"], cfg["probe"]["probe_duration"])


def evaluate_checkpoint(path, library: ContextLibrary, kk: KKReference,
                        config: ProbeConfig = ProbeConfig(), use_manifest: bool = True) -> CheckpointResult:
    path = Path(path)
    ckpt = load_checkpoint(path)
    manifest = _manifest_for(path, ckpt.manifest) if use_manifest else None
    config = probe_config_for(manifest, config)
    if config.cqt.n_bins != ckpt.params.n_in:
        raise ValueError(f"{path}: model has {ckpt.params.n_in} inputs but the CQT config "
                         f"gives {config.cqt.n_bins} bins")
    name = path.name[:-len(".ckpt")] if path.name.endswith(".ckpt") else path.stem
    return CheckpointResult(name, ckpt.params.kind, manifest,
                            run_probe_tone(ckpt.params, library, kk, config))


def write_probetone_outputs(results: Sequence[CheckpointResult], library: ContextLibrary,
                            kk: KKReference, out_dir, svg: bool = False) -> list[Path]:
    """Per checkpoint ``<name>.contexts.csv`` and ``<name>.modes.csv``; one ``scatter.csv`` row each."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for cr in results:
        res = cr.result
        ctx_rows = [{"context": c.name, "mode": c.mode, "probe": tau,
                     "kl": float(res.kl[c.name].values[tau]), "fit": float(res.fit[c.name].values[tau])}
                    for c in library for tau in range(12)]
        written.append(write_csv(out / f"{cr.name}.contexts.csv", CONTEXT_FIELDS, ctx_rows))
        mode_rows = [{"mode": mode, "probe": tau, "fit": float(prof.values[tau]),
                      "kk": kk.profile(mode)[tau]}
                     for mode, prof in res.mode_profiles.items() for tau in range(12)]
        written.append(write_csv(out / f"{cr.name}.modes.csv", MODE_FIELDS, mode_rows))
        if svg:
            from .plots import plot_profiles
            written.append(plot_profiles({m: p.values for m, p in res.mode_profiles.items()}, kk,
                                         out / f"{cr.name}.profiles.svg"))
    rows = []
    for cr in results:
        m = cr.manifest or {}
        rows.append({"checkpoint": cr.name, "kind": cr.kind, "ordering": m.get("ordering"),
                     "test_mce": m.get("test_mce"), "r_major": cr.result.r_major,
                     "r_minor": cr.result.r_minor, "r_major_by_key": cr.result.r_major_by_key,
                     "r_minor_by_key": cr.result.r_minor_by_key})
    written.append(write_csv(out / "scatter.csv", CORRELATION_FIELDS, rows))
    if svg and any(r["test_mce"] is not None for r in rows):
        from .plots import plot_scatter
        pts = [dict(r, shuf=int(r["ordering"] == "shuffled")) for r in rows]
        written.append(plot_scatter(pts, out / "scatter.svg"))
    return written
