"""Divide-and-conquer multi-hypothesis training and lane-anchored trajectory prediction."""

__version__ = "0.1.0"
