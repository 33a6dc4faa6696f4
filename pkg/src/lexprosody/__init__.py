"""Lexical informativity and prosody: corpus statistics, acoustics, SNR gating, predictors and mixed models."""

__version__ = "0.1.0"
