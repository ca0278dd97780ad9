"""Karaoke-style pitch correction: analysis, note decoding, tuning and neural vocoding."""

__version__ = "0.1.0"
