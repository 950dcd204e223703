"""
Synthetic tonal corpus: Shepard-tone scales, cadences and functional chord
progressions with a stepwise melody, rendered to WAV with beat files.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..corpus import CorpusEntry, write_corpus_manifest
from ..dsp import AudioSignal, ShepardConfig, concatenate, shepard_chord
from ..wavio import write_wav

__all__ = ["CorpusRecipe", "load_recipe", "generate_piece_events", "render_events",
           "synth_corpus", "KEY_NAMES"]

KEY_NAMES = ["C", "Db", "D", "Eb", "E", "F", "Gb", "G", "Ab", "A", "Bb", "B"]

SCALES = {"major": (0, 2, 4, 5, 7, 9, 11), "minor": (0, 2, 3, 5, 7, 8, 11)}

CHORDS = {
    "major": {"I": (0, 4, 7), "ii": (2, 5, 9), "iii": (4, 7, 11), "IV": (5, 9, 0),
              "V": (7, 11, 2), "V7": (7, 11, 2, 5), "vi": (9, 0, 4), "vii": (11, 2, 5)},
    "minor": {"I": (0, 3, 7), "ii": (2, 5, 8), "III": (3, 7, 10), "IV": (5, 8, 0),
              "V": (7, 11, 2), "V7": (7, 11, 2, 5), "VI": (8, 0, 3), "VII": (10, 2, 5),
              "vii": (11, 2, 5)},
}

TRANSITIONS = {
    "major": {"I": {"IV": 3, "V": 3, "vi": 2, "ii": 2, "iii": 1},
              "ii": {"V": 4, "V7": 2, "vii": 1},
              "iii": {"vi": 2, "IV": 2},
              "IV": {"V": 3, "I": 2, "ii": 1, "V7": 1},
              "V": {"I": 5, "vi": 1},
              "V7": {"I": 1},
              "vi": {"ii": 2, "IV": 2, "V": 1},
              "vii": {"I": 1}},
    "minor": {"I": {"IV": 3, "V": 3, "VI": 2, "ii": 1, "III": 1, "VII": 1},
              "ii": {"V": 3, "V7": 2},
              "III": {"VI": 2, "IV": 1},
              "IV": {"V": 3, "I": 2, "V7": 1},
              "V": {"I": 5, "VI": 1},
              "V7": {"I": 1},
              "VI": {"ii": 1, "IV": 2, "V": 2},
              "VII": {"III": 2, "I": 1},
              "vii": {"I": 1}},
}

CADENCE_APPROACH = {"major": ("ii", "IV", "vi"), "minor": ("ii", "IV", "VI")}


@dataclass(frozen=True)
class CorpusRecipe:
    """How to synthesize a corpus; every field can be set in a recipe JSON file."""

    seed: int = 0
    sample_rate: int = 44100
    tempo_bpm: float = 120.0
    subdivision: int = 4
    modes: tuple[str, ...] = ("major", "minor")
    keys: tuple[int, ...] = tuple(range(12))
    pieces_per_key: int = 1
    beats_per_piece: int = 48
    phrase_weights: dict = field(default_factory=lambda: {"scale": 1, "cadence": 2,
                                                          "progression": 3})
    melody_probability: float = 0.7
    shepard: ShepardConfig = ShepardConfig()

    @property
    def beat_duration(self) -> float:
        return 60.0 / self.tempo_bpm

    def to_dict(self) -> dict:
        d = asdict(self)
        d["modes"] = list(self.modes)
        d["keys"] = list(self.keys)
        return d


def load_recipe(path) -> CorpusRecipe:
    doc = json.loads(Path(path).read_text())
    if "shepard" in doc:
        doc["shepard"] = ShepardConfig(**doc["shepard"])
    for name in ("modes", "keys"):
        if name in doc:
            doc[name] = tuple(doc[name])
    return CorpusRecipe(**doc)


def _choose(rng, weights: dict):
    names = sorted(weights)
    p = np.array([weights[n] for n in names], dtype=np.float64)
    return names[rng.choice(len(names), p=p / p.sum())]


def _melody(rng, mode, chord, prev):
    """Next melody pitch class: a step from the previous note, preferring chord tones."""
    scale = SCALES[mode]
    if prev is None:
        return int(rng.choice(chord))
    i = scale.index(prev) if prev in scale else 0
    options = [scale[(i + d) % 7] for d in (-2, -1, 0, 1, 2)]
    weights = np.array([3.0 if o in chord else 1.0 for o in options])
    return int(options[rng.choice(len(options), p=weights / weights.sum())])


def _harmonize(rng, mode, chords, recipe, melody_state):
    """Expand ``(chord name, beats)`` into per-beat events with a melody line."""
    events = []
    for name, beats in chords:
        chord = CHORDS[mode][name]
        for _ in range(beats):
            pcs = set(chord)
            if rng.random() < recipe.melody_probability:
                melody_state[0] = _melody(rng, mode, chord, melody_state[0])
                pcs.add(melody_state[0])
            events.append((tuple(sorted(pcs)), 1))
    return events


def _phrase(rng, mode, kind, recipe, melody_state):
    if kind == "scale":
        tones = [((p,), 1) for p in SCALES[mode] + (0,)]
        melody_state[0] = 0
        return tones + [(CHORDS[mode]["I"], 2)]
    if kind == "cadence":
        approach = CADENCE_APPROACH[mode][rng.integers(3)]
        return _harmonize(rng, mode, [(approach, 2), ("V", 2), ("I", 2)], recipe, melody_state)
    chords = [("I", int(rng.integers(1, 3)))]
    n_chords = int(rng.integers(3, 7))
    while len(chords) < n_chords or chords[-1][0] != "I":
        chords.append((_choose(rng, TRANSITIONS[mode][chords[-1][0]]), int(rng.integers(1, 3))))
        if len(chords) > 16:
            chords += [("V", 1), ("I", 2)]
            break
    return _harmonize(rng, mode, chords, recipe, melody_state)


def generate_piece_events(rng: np.random.Generator, mode: str, recipe: CorpusRecipe):
    """Relative-to-tonic ``(pitch classes, beats)`` events for one piece."""
    events = []
    melody_state = [None]
    beats = 0
    while beats < recipe.beats_per_piece:
        for pcs, n in _phrase(rng, mode, _choose(rng, recipe.phrase_weights), recipe,
                              melody_state):
            events.append((pcs, n))
            beats += n
    return events


def render_events(events, key: int, recipe: CorpusRecipe) -> tuple[AudioSignal, np.ndarray]:
    """Audio and beat times for events transposed to ``key``."""
    beat = recipe.beat_duration
    signals = [shepard_chord([(p + key) % 12 for p in pcs], n * beat, recipe.sample_rate,
                             recipe.shepard) for pcs, n in events]
    audio = concatenate(signals)
    n_beats = sum(n for _, n in events)
    beats = np.arange(n_beats + 1) * beat
    return audio, beats[beats <= audio.duration + 1e-9]


def synth_corpus(out_dir, recipe: CorpusRecipe = CorpusRecipe()) -> list[CorpusEntry]:
    """Write ``<id>.wav`` and ``<id>.beats.txt`` per piece plus ``corpus.csv``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    root = np.random.SeedSequence(recipe.seed)
    jobs = [(mode, key, i) for mode in recipe.modes for key in recipe.keys
            for i in range(recipe.pieces_per_key)]
    entries = []
    for (mode, key, i), seq in zip(jobs, root.spawn(len(jobs))):
        rng = np.random.default_rng(seq)
        events = generate_piece_events(rng, mode, recipe)
        audio, beats = render_events(events, key, recipe)
        pid = f"{KEY_NAMES[key]}{'' if mode == 'major' else 'm'}_{i:02d}"
        wav_path = out / f"{pid}.wav"
        beats_path = out / f"{pid}.beats.txt"
        write_wav(wav_path, audio)
        beats_path.write_text("".join(f"{b:.6f}\n" for b in beats))
        entries.append(CorpusEntry(pid, wav_path, beats_path, recipe.subdivision))
    write_corpus_manifest(out / "corpus.csv", entries)
    (out / "recipe.json").write_text(json.dumps(recipe.to_dict(), indent=2) + "\n")
    return entries
