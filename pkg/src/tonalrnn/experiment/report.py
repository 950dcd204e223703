"""
Summaries across runs: best-model correlation table, MCE-vs-correlation
scatter data and pairwise KS tests on the mode profiles.

CSV is the canonical output; SVG plots are optional extras.
"""
from __future__ import annotations

import csv
import itertools
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..probetone import KKReference, load_kk_reference
from ..stats import ks_two_sample
from .persistence import find_manifests, read_manifest

__all__ = ["load_runs", "best_by_dataset", "table_rows", "scatter_rows", "ks_rows",
           "write_csv", "write_report", "TABLE_FIELDS", "SCATTER_FIELDS", "KS_FIELDS"]

TABLE_FIELDS = ["dataset", "name", "kind", "ordering", "fold", "test_mce", "r_major", "r_minor"]
SCATTER_FIELDS = ["name", "dataset", "kind", "ordering", "shuf", "fold", "test_mce",
                  "r_major", "r_minor", "r_major_by_key", "r_minor_by_key"]
KS_FIELDS = ["mode", "a", "b", "statistic", "p_value"]


def load_runs(directory) -> list[dict]:
    paths = find_manifests(directory)
    if not paths:
        raise FileNotFoundError(f"no run manifests (*.manifest.json) under {directory}")
    return [read_manifest(p) for p in paths]


def best_by_dataset(manifests: Sequence[dict]) -> dict[str, dict]:
    """Lowest-test-MCE run per dataset; ties go to the first name in sort order."""
    best: dict[str, dict] = {}
    for m in sorted(manifests, key=lambda m: m["name"]):
        cur = best.get(m["dataset_id"])
        if cur is None or m["test_mce"] < cur["test_mce"]:
            best[m["dataset_id"]] = m
    return dict(sorted(best.items()))


def table_rows(manifests: Sequence[dict]) -> list[dict]:
    return [{"dataset": d, **{k: m.get(k) for k in TABLE_FIELDS[1:]}}
            for d, m in best_by_dataset(manifests).items()]


def scatter_rows(manifests: Sequence[dict]) -> list[dict]:
    rows = []
    for m in sorted(manifests, key=lambda m: m["name"]):
        row = {k: m.get(k) for k in SCATTER_FIELDS if k not in ("dataset", "shuf")}
        row["dataset"] = m["dataset_id"]
        row["shuf"] = int(m["ordering"] == "shuffled")
        rows.append(row)
    return rows


def _minmax(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    spread = v.max() - v.min()
    return np.full_like(v, 0.5) if spread == 0 else (v - v.min()) / spread


def ks_rows(best: dict[str, dict], kk: Optional[KKReference] = None) -> list[dict]:
    """KS tests per mode: KK against every dataset's best model, then dataset pairs.

    Profiles are min-max scaled first so ratings and fit scores share a range.
    """
    kk = kk or load_kk_reference()
    rows = []
    for mode in ("major", "minor"):
        profiles = {"KK": _minmax(kk.profile(mode))}
        for did, m in best.items():
            prof = (m.get("profiles") or {}).get(mode)
            if prof is not None:
                profiles[did] = _minmax(prof)
        for a, b in itertools.combinations(profiles, 2):
            d, p = ks_two_sample(profiles[a], profiles[b])
            rows.append({"mode": mode, "a": a, "b": b, "statistic": d, "p_value": p})
    return rows


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if v != v else repr(v)
    return v


def write_csv(path, fields: Sequence[str], rows: Sequence[dict]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_cell(row.get(f)) for f in fields])
    return path


def write_report(manifest_dir, out_dir, kk: Optional[KKReference] = None,
                 svg: bool = False) -> dict[str, Path]:
    """Write ``table.csv``, ``scatter.csv`` and ``ks.csv`` (plus ``scatter.svg``)."""
    manifests = load_runs(manifest_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scatter = scatter_rows(manifests)
    written = {
        "table": write_csv(out / "table.csv", TABLE_FIELDS, table_rows(manifests)),
        "scatter": write_csv(out / "scatter.csv", SCATTER_FIELDS, scatter),
        "ks": write_csv(out / "ks.csv", KS_FIELDS, ks_rows(best_by_dataset(manifests), kk)),
    }
    if svg:
        from .plots import plot_scatter
        written["scatter_svg"] = plot_scatter(scatter, out / "scatter.svg")
    return written
