"""
Simulated probe-tone experiment.

A context (scale, cadence or chord) is rendered with Shepard tones in each
of the 12 keys and fed to a model. The model's prediction after the last
frame is compared with the CQT frame of each probe tone by KL divergence;
lower divergence means a better fit. Divergences are aligned to the tonic
of each key, averaged, turned into fit scores and correlated with the
Krumhansl-Kessler ratings.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .dsp import (CqtConfig, ShepardConfig, Spectrogram, concatenate, cqt_frame_raw,
                  normalize_frame, shepard_chord, shepard_tone)
from .rnn import CellParams, forward
from .stats import kl_divergence, ks_two_sample, pearson, to_distribution

__all__ = [
    "MODES",
    "MODE_GROUPS",
    "TonalContext",
    "ContextLibrary",
    "KKReference",
    "ProbeConfig",
    "ProbeToneProfile",
    "ProbeToneResult",
    "load_context_library",
    "load_kk_reference",
    "render_context",
    "render_probe",
    "model_expectation",
    "probe_fit_vector",
    "context_kl_by_key",
    "aggregate_context",
    "fit_scores",
    "mode_aggregate",
    "kk_correlations",
    "run_probe_tone",
    "to_distribution",
    "kl_divergence",
    "pearson",
    "ks_two_sample",
]

MODES = ("major", "minor", "chord-major-group", "chord-minor-group")
MODE_GROUPS = {"major": ("major", "chord-major-group"),
               "minor": ("minor", "chord-minor-group")}

# A model is either trained weights or any callable mapping a (T, N)
# spectrogram to the (N,) expectation that follows it.
Model = Union[CellParams, Callable[[np.ndarray], np.ndarray]]


@dataclass(frozen=True)
class TonalContext:
    name: str
    mode: str
    events: tuple[tuple[tuple[int, ...], float], ...]

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"context {self.name!r}: unknown mode {self.mode!r}")
        if not self.events:
            raise ValueError(f"context {self.name!r} has no events")
        for pcs, duration in self.events:
            if not pcs or any(not 0 <= p <= 11 for p in pcs):
                raise ValueError(f"context {self.name!r}: pitch classes must be in 0..11")
            if duration <= 0:
                raise ValueError(f"context {self.name!r}: event durations must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "TonalContext":
        events = tuple((tuple(int(p) for p in e["pcs"]), float(e["duration"]))
                       for e in d["events"])
        return cls(d["name"], d["mode"], events)


@dataclass(frozen=True)
class ContextLibrary:
    contexts: tuple[TonalContext, ...]

    def __post_init__(self):
        names = [c.name for c in self.contexts]
        if len(set(names)) != len(names):
            raise ValueError("context names must be unique")

    def __iter__(self):
        return iter(self.contexts)

    def __len__(self):
        return len(self.contexts)

    def group(self, mode: str) -> list[TonalContext]:
        return [c for c in self.contexts if c.mode in MODE_GROUPS[mode]]


@dataclass(frozen=True)
class KKReference:
    major: tuple[float, ...]
    minor: tuple[float, ...]
    citation: str = ""

    def __post_init__(self):
        for name in ("major", "minor"):
            values = getattr(self, name)
            if len(values) != 12 or any(v <= 0 for v in values):
                raise ValueError(f"KK {name} profile must have 12 positive values")

    def profile(self, mode: str) -> np.ndarray:
        return np.array(getattr(self, mode))


def _read_json(path, default_name):
    if path is None:
        text = resources.files("tonalrnn.data").joinpath(default_name).read_text()
    else:
        text = Path(path).read_text()
    return json.loads(text)


def load_context_library(path=None) -> ContextLibrary:
    """Load a context file; ``None`` loads the bundled default library."""
    doc = _read_json(path, "contexts.json")
    return ContextLibrary(tuple(TonalContext.from_dict(d) for d in doc["contexts"]))


def load_kk_reference(path=None) -> KKReference:
    doc = _read_json(path, "kk_profiles.json")
    return KKReference(tuple(doc["major"]), tuple(doc["minor"]), doc.get("citation", ""))


@dataclass(frozen=True)
class ProbeConfig:
    shepard: ShepardConfig = ShepardConfig()
    cqt: CqtConfig = CqtConfig()
    sample_rate: int = 44100
    probe_duration: float = 1.0


@dataclass
class ProbeToneProfile:
    values: np.ndarray
    kind: str  # "kl", "fit" or "rating"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (12,):
            raise ValueError("a probe-tone profile has 12 values")


@lru_cache(maxsize=512)
def _render_context_cached(context: TonalContext, key: int, config: ProbeConfig) -> Spectrogram:
    signals, centers, t = [], [], 0.0
    for pcs, duration in context.events:
        sig = shepard_chord([(p + key) % 12 for p in pcs], duration, config.sample_rate,
                            config.shepard)
        signals.append(sig)
        centers.append(t + sig.duration / 2.0)
        t += sig.duration
    audio = concatenate(signals)
    values = np.stack([normalize_frame(cqt_frame_raw(audio, c, config.cqt)) for c in centers])
    values.setflags(write=False)
    return Spectrogram(values, np.array(centers), f"{context.name}@{key}")


def render_context(context: TonalContext, key: int, config: ProbeConfig = ProbeConfig()) -> Spectrogram:
    """One normalized CQT frame per event, centred on the event, in ``key``."""
    return _render_context_cached(context, int(key) % 12, config)


@lru_cache(maxsize=64)
def _render_probe_cached(pitch_class: int, config: ProbeConfig) -> np.ndarray:
    tone = shepard_tone(pitch_class, config.probe_duration, config.sample_rate, config.shepard)
    frame = normalize_frame(cqt_frame_raw(tone, tone.duration / 2.0, config.cqt))
    frame.setflags(write=False)
    return frame


def render_probe(pitch_class: int, config: ProbeConfig = ProbeConfig()) -> np.ndarray:
    if not 0 <= pitch_class <= 11:
        raise ValueError("probe pitch class must be in 0..11")
    return _render_probe_cached(int(pitch_class), config)


def model_expectation(model: Model, spectrogram) -> np.ndarray:
    """The model's prediction for the frame after the last stimulus frame."""
    frames = spectrogram.values if isinstance(spectrogram, Spectrogram) else np.asarray(spectrogram)
    if len(frames) == 0:
        raise ValueError("empty stimulus")
    if isinstance(model, CellParams):
        y, _ = forward(model, frames)
        return y[-1]
    return np.asarray(model(frames), dtype=np.float64)


def probe_fit_vector(model: Model, context: TonalContext, key: int,
                     config: ProbeConfig = ProbeConfig()) -> np.ndarray:
    """KL(probe || expectation) for the 12 absolute probe pitch classes."""
    q = to_distribution(model_expectation(model, render_context(context, key, config)))
    return np.array([kl_divergence(to_distribution(render_probe(tau, config)), q)
                     for tau in range(12)])


def context_kl_by_key(model: Model, context: TonalContext, config: ProbeConfig = ProbeConfig(),
                      keys: Sequence[int] = range(12)) -> np.ndarray:
    """``(len(keys), 12)`` KL vectors, rotated so index 0 is each key's tonic."""
    return np.stack([np.roll(probe_fit_vector(model, context, k, config), -k) for k in keys])


def aggregate_context(model: Model, context: TonalContext, config: ProbeConfig = ProbeConfig(),
                      keys: Sequence[int] = range(12)) -> ProbeToneProfile:
    return ProbeToneProfile(context_kl_by_key(model, context, config, keys).mean(axis=0), "kl")


def fit_scores(kl_profile, rtol: float = 1e-9) -> ProbeToneProfile:
    """Map divergences to [0, 1]: the best-fitting probe scores 1, the worst 0.

    A profile whose spread is within ``rtol`` of its magnitude is treated as
    constant (all 0.5), so rounding noise is not stretched to the full range.
    """
    kl = kl_profile.values if isinstance(kl_profile, ProbeToneProfile) else np.asarray(kl_profile)
    spread = kl.max() - kl.min()
    if spread <= rtol * max(abs(kl.max()), abs(kl.min())):
        return ProbeToneProfile(np.full(12, 0.5), "fit")
    return ProbeToneProfile((kl.max() - kl) / spread, "fit")


def mode_aggregate(fit_by_context: dict[str, ProbeToneProfile], library: ContextLibrary,
                   mode: str) -> ProbeToneProfile:
    """Mean fit profile over the contexts of a mode group (``major`` or ``minor``)."""
    names = sorted(c.name for c in library.group(mode) if c.name in fit_by_context)
    if not names:
        raise ValueError(f"no {mode} contexts to aggregate")
    return ProbeToneProfile(np.mean([fit_by_context[n].values for n in names], axis=0), "fit")


@dataclass
class ProbeToneResult:
    kl_by_key: dict[str, np.ndarray] = field(default_factory=dict)
    kl: dict[str, ProbeToneProfile] = field(default_factory=dict)
    fit: dict[str, ProbeToneProfile] = field(default_factory=dict)
    mode_profiles: dict[str, ProbeToneProfile] = field(default_factory=dict)
    r_major: float = float("nan")
    r_minor: float = float("nan")
    # correlations computed per transposition, then averaged over keys
    r_major_by_key: float = float("nan")
    r_minor_by_key: float = float("nan")


def _safe_pearson(a, b) -> float:
    # a flat fit profile carries no tonal information; report it as uncorrelated
    if np.ptp(a) == 0:
        return 0.0
    return pearson(a, b)


def run_probe_tone(model: Model, library: ContextLibrary, kk: KKReference,
                   config: ProbeConfig = ProbeConfig()) -> ProbeToneResult:
    res = ProbeToneResult()
    for ctx in library:
        res.kl_by_key[ctx.name] = context_kl_by_key(model, ctx, config)
        res.kl[ctx.name] = ProbeToneProfile(res.kl_by_key[ctx.name].mean(axis=0), "kl")
        res.fit[ctx.name] = fit_scores(res.kl[ctx.name])
    for mode in ("major", "minor"):
        if not library.group(mode):
            continue
        res.mode_profiles[mode] = mode_aggregate(res.fit, library, mode)
        r = _safe_pearson(res.mode_profiles[mode].values, kk.profile(mode))
        per_key = []
        for k in range(12):
            fits = {name: fit_scores(v[k]) for name, v in res.kl_by_key.items()}
            per_key.append(_safe_pearson(mode_aggregate(fits, library, mode).values,
                                         kk.profile(mode)))
        setattr(res, f"r_{mode}", r)
        setattr(res, f"r_{mode}_by_key", float(np.mean(per_key)))
    return res


def kk_correlations(model: Model, library: ContextLibrary, kk: KKReference,
                    config: ProbeConfig = ProbeConfig()) -> tuple[float, float]:
    """Pearson r of the key-averaged major/minor fit profiles with the KK ratings."""
    res = run_probe_tone(model, library, kk, config)
    return res.r_major, res.r_minor
