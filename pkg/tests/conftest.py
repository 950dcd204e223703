import numpy as np
import pytest

from tonalrnn.corpus import Piece
from tonalrnn.dsp import Spectrogram


def chroma_fold(frame, bins_per_octave=36, f_min_pitch_class=9):
    """Sum a 36-bin/octave frame into 12 semitone groups (C=0).

    Bin 3m is the semitone m above the lowest bin (A0 by default); each group
    is the triplet of bins centred on its semitone, summed over all octaves.
    """
    per = bins_per_octave // 12
    k = np.arange(len(frame))
    semitone = np.round(k / per).astype(int)
    pc = (f_min_pitch_class + semitone) % 12
    return np.bincount(pc, weights=np.asarray(frame), minlength=12)


def make_piece(values, piece_id="p", start=0.0):
    values = np.asarray(values, dtype=np.float64)
    times = start + np.arange(len(values)) * 0.125
    return Piece(piece_id, Spectrogram(values, times, piece_id))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one line per acceptance criterion; printed in the terminal summary."""
    def record(number, title, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title}: {detail}"
        _ACCEPTANCE_LINES.append((number, line))
        print("\n" + line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
