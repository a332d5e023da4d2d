"""Articulate static furniture meshes: part fusion, motion heuristics, interiors, metrics."""

__version__ = "0.1.0"
