"""
Dataset ingestion: beat grids, beat-synchronous spectrograms, piece-wise
shuffling, fold splitting and training-batch sampling.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dsp import CqtConfig, Spectrogram, beat_sync_spectrogram
from .wavio import read_wav

__all__ = [
    "BeatGrid",
    "Piece",
    "FoldSplit",
    "Batch",
    "CorpusEntry",
    "load_beat_annotations",
    "subdivide_beats",
    "ingest_piece",
    "ingest_corpus",
    "piecewise_shuffle",
    "make_folds",
    "sample_batch",
    "epoch_batches",
    "read_corpus_manifest",
    "write_corpus_manifest",
    "save_pieces",
    "load_pieces",
]


@dataclass(frozen=True, eq=False)
class BeatGrid:
    beat_times: np.ndarray
    subdivision: int = 4

    def __post_init__(self):
        beats = np.asarray(self.beat_times, dtype=np.float64)
        if beats.ndim != 1 or len(beats) < 2:
            raise ValueError("a beat grid needs at least 2 beats")
        if np.any(np.diff(beats) <= 0):
            raise ValueError("beat times must be strictly increasing")
        if self.subdivision < 1:
            raise ValueError("subdivision must be a positive integer")
        object.__setattr__(self, "beat_times", beats)


@dataclass(eq=False)
class Piece:
    piece_id: str
    spectrogram: Spectrogram
    source: str = ""
    shuffled: bool = False
    shuffle_seed: Optional[int] = None

    def __post_init__(self):
        if len(self.spectrogram) == 0:
            raise ValueError(f"piece {self.piece_id!r} has an empty spectrogram")

    def __len__(self):
        return len(self.spectrogram)

    @property
    def values(self) -> np.ndarray:
        return self.spectrogram.values


@dataclass(frozen=True)
class FoldSplit:
    fold_index: int
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]

    def __post_init__(self):
        if set(self.train_ids) & set(self.test_ids):
            raise ValueError("train and test pieces overlap")


@dataclass(eq=False)
class Batch:
    """``inputs`` and ``targets`` are ``(batch, seq_len, N)``.

    ``origins`` holds ``(piece index, start offset)`` per slot so the window
    can be traced back to its source piece.
    """

    inputs: np.ndarray
    targets: np.ndarray
    origins: list[tuple[int, int]] = field(default_factory=list)


@dataclass(frozen=True)
class CorpusEntry:
    piece_id: str
    audio: Path
    beats: Path
    subdivision: int


def load_beat_annotations(path, subdivision: int = 4) -> BeatGrid:
    """Read a beat file: one beat per line, first token is the time in seconds.

    Blank lines and lines starting with ``#`` are skipped; anything after
    the first token on a line is ignored.
    """
    times = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            try:
                t = float(tokens[0])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: cannot parse beat time {tokens[0]!r}") from None
            if not math.isfinite(t):
                raise ValueError(f"{path}:{lineno}: beat time must be finite")
            if times and t <= times[-1]:
                raise ValueError(
                    f"{path}:{lineno}: beat times not strictly increasing ({t} after {times[-1]})")
            times.append(t)
    return BeatGrid(np.array(times), subdivision)


def subdivide_beats(grid: BeatGrid) -> np.ndarray:
    beats = grid.beat_times
    s = grid.subdivision
    frac = np.arange(s) / s
    inner = beats[:-1, None] + np.diff(beats)[:, None] * frac[None, :]
    return np.append(inner.ravel(), beats[-1])


def ingest_piece(audio_path, beats_path, cqt_config: CqtConfig = CqtConfig(),
                 subdivision: int = 4, piece_id: Optional[str] = None) -> Piece:
    if not Path(beats_path).exists():
        raise FileNotFoundError(f"beat annotation file not found: {beats_path}")
    grid = load_beat_annotations(beats_path, subdivision)
    signal = read_wav(audio_path)
    pid = piece_id or Path(audio_path).stem
    spec = beat_sync_spectrogram(signal, subdivide_beats(grid), cqt_config, pid)
    return Piece(pid, spec, source=str(audio_path))


def _ingest_entry(args):
    entry, cqt_config = args
    return ingest_piece(entry.audio, entry.beats, cqt_config, entry.subdivision, entry.piece_id)


def ingest_corpus(entries: Sequence[CorpusEntry], cqt_config: CqtConfig = CqtConfig(),
                  jobs: int = 1) -> list[Piece]:
    """Ingest every manifest entry, in parallel processes when ``jobs > 1``."""
    ids = [e.piece_id for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError("corpus manifest has duplicate piece ids")
    work = [(e, cqt_config) for e in entries]
    if jobs <= 1:
        return [_ingest_entry(w) for w in work]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_ingest_entry, work))


def piecewise_shuffle(piece: Piece, seed: int) -> Piece:
    """Randomly permute the frames of one piece.

    Centre times keep their original order so the result is still a valid
    spectrogram; only which content sits at which time changes.
    """
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(piece))
    spec = piece.spectrogram
    shuffled = Spectrogram(spec.values[perm], spec.times.copy(), spec.piece_id)
    return replace(piece, spectrogram=shuffled, shuffled=True, shuffle_seed=seed)


def make_folds(piece_ids: Sequence[str], n_folds: int = 5, train_fraction: float = 0.8,
               seed: int = 0) -> list[FoldSplit]:
    """Partition pieces into ``n_folds`` disjoint groups, each split train/test.

    Every group keeps at least one test piece; a group of a single piece
    therefore has no training piece.
    """
    ids = list(piece_ids)
    if len(set(ids)) != len(ids):
        raise ValueError("piece ids must be unique")
    if n_folds < 1:
        raise ValueError("n_folds must be >= 1")
    if len(ids) < n_folds:
        raise ValueError(f"{len(ids)} pieces cannot fill {n_folds} folds")
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    folds = []
    for index, group in enumerate(np.array_split(np.array(order, dtype=object), n_folds)):
        group = list(group)
        n_test = max(1, int(round(len(group) * (1.0 - train_fraction))))
        if len(group) > 1:
            n_test = min(n_test, len(group) - 1)
        picked = [group[i] for i in rng.permutation(len(group))]
        test = tuple(sorted(picked[:n_test]))
        train = tuple(sorted(picked[n_test:]))
        folds.append(FoldSplit(index, train, test))
    return folds


def sample_batch(train_pieces: Sequence[Piece], batch_size: int = 20, seq_len: int = 100,
                 rng: Optional[np.random.Generator] = None) -> Batch:
    """Draw ``batch_size`` windows of ``seq_len + 1`` consecutive frames.

    A piece is chosen uniformly among those long enough, then a start
    offset uniformly within it. Windows never cross piece boundaries.
    """
    rng = rng if rng is not None else np.random.default_rng()
    eligible = [i for i, p in enumerate(train_pieces) if len(p) >= seq_len + 1]
    if not eligible:
        raise ValueError(f"no training piece has at least {seq_len + 1} frames")
    n = train_pieces[eligible[0]].values.shape[1]
    inputs = np.empty((batch_size, seq_len, n))
    targets = np.empty((batch_size, seq_len, n))
    origins = []
    for slot in range(batch_size):
        idx = eligible[rng.integers(len(eligible))]
        values = train_pieces[idx].values
        start = int(rng.integers(len(values) - seq_len))
        inputs[slot] = values[start:start + seq_len]
        targets[slot] = values[start + 1:start + seq_len + 1]
        origins.append((idx, start))
    return Batch(inputs, targets, origins)


def epoch_batches(train_pieces: Sequence[Piece], batch_size: int = 20, seq_len: int = 100) -> int:
    if not train_pieces:
        raise ValueError("empty training set")
    total = sum(len(p) for p in train_pieces)
    return max(1, math.ceil(total / (batch_size * seq_len)))


def read_corpus_manifest(path, root=None) -> list[CorpusEntry]:
    """Read a corpus manifest CSV with columns piece_id, audio, beats, subdivision.

    Relative paths resolve against ``root`` if given, else the manifest's folder.
    """
    path = Path(path)
    base = Path(root) if root is not None else path.parent
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"piece_id", "audio", "beats", "subdivision"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            entries.append(CorpusEntry(row["piece_id"], base / row["audio"], base / row["beats"],
                                       int(row["subdivision"])))
    return entries


def write_corpus_manifest(path, entries: Sequence[CorpusEntry], root=None):
    path = Path(path)
    base = Path(root) if root is not None else path.parent
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["piece_id", "audio", "beats", "subdivision"])
        for e in entries:
            writer.writerow([e.piece_id, _relative(e.audio, base), _relative(e.beats, base),
                             e.subdivision])


def _relative(p: Path, base: Path) -> str:
    try:
        return Path(p).resolve().relative_to(base.resolve()).as_posix()
    except ValueError:
        return str(p)


def save_pieces(directory, pieces: Sequence[Piece], cqt_config: CqtConfig):
    """Store ingested pieces as ``.npy`` frame/time arrays plus an index file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {"cqt": cqt_config.__dict__, "pieces": []}
    for p in pieces:
        np.save(directory / f"{p.piece_id}.frames.npy", p.values)
        np.save(directory / f"{p.piece_id}.times.npy", p.spectrogram.times)
        index["pieces"].append({"piece_id": p.piece_id, "source": p.source,
                                "n_frames": len(p)})
    (directory / "pieces.json").write_text(json.dumps(index, indent=2) + "\n")


def load_pieces(directory) -> tuple[list[Piece], CqtConfig]:
    directory = Path(directory)
    index_path = directory / "pieces.json"
    if not index_path.exists():
        raise FileNotFoundError(f"no ingested dataset at {directory} (missing pieces.json)")
    index = json.loads(index_path.read_text())
    pieces = []
    for item in index["pieces"]:
        pid = item["piece_id"]
        spec = Spectrogram(np.load(directory / f"{pid}.frames.npy"),
                           np.load(directory / f"{pid}.times.npy"), pid)
        pieces.append(Piece(pid, spec, source=item.get("source", "")))
    return pieces, CqtConfig(**index["cqt"])
