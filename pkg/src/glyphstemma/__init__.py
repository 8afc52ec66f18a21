"""Transcription-free stemmatology from page images, plus text-distance evaluation tools."""

__version__ = "0.1.0"
