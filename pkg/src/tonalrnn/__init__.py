"""Recurrent next-frame models of CQT spectrograms and a simulated probe-tone experiment."""

__version__ = "0.1.0"
