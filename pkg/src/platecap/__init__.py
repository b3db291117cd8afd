"""Numerical companion for thin-plate Korn inequalities, dimension reduction,
and elastic logarithmic capacity of small supports."""

__version__ = "0.1.0"
