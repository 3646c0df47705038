"""Synthetic shape-attribute stimuli, a two-headed attribute/embedding model,
and the probing experiments run against it."""

__version__ = "0.1.0"
