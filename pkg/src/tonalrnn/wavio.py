"""WAV reading and writing (PCM 16/24-bit integer, 32-bit float)."""
from __future__ import annotations

import numpy as np
from scipy.io import wavfile

from .dsp import AudioSignal

__all__ = ["read_wav", "write_wav"]

_INT_SCALE = {np.dtype(np.int16): 2 ** 15, np.dtype(np.int32): 2 ** 31}


def read_wav(path) -> AudioSignal:
    """Read a WAV file into a mono float signal in [-1, 1].

    Multi-channel audio is downmixed by averaging channels. 24-bit files are
    returned by scipy left-justified in int32, so the same 2**31 scale applies.
    """
    rate, data = wavfile.read(str(path))
    if data.dtype in _INT_SCALE:
        x = data.astype(np.float64) / _INT_SCALE[data.dtype]
    elif data.dtype == np.uint8:
        x = (data.astype(np.float64) - 128.0) / 128.0
    elif np.issubdtype(data.dtype, np.floating):
        x = data.astype(np.float64)
    else:
        raise ValueError(f"{path}: unsupported WAV sample type {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    return AudioSignal(x, int(rate))


def write_wav(path, signal: AudioSignal, fmt: str = "pcm16"):
    """Write ``signal`` as ``pcm16`` or ``float32``; samples are clipped to [-1, 1]."""
    x = np.clip(signal.samples, -1.0, 1.0)
    if fmt == "pcm16":
        data = np.round(x * 32767.0).astype("<i2")
    elif fmt == "float32":
        data = x.astype("<f4")
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    wavfile.write(str(path), signal.sample_rate, data)
