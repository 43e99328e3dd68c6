"""FMCW radar gesture recognition: simulator, feature pipeline, GRU classifier and event scoring."""

__version__ = "0.1.0"
