"""Utility fusion and learned additive corrections for deep Q-learning."""

__version__ = "0.1.0"
