"""Presentation layer for simulation statistics.

Reads the stats CSV written by the simulation CLI and renders the standard
figure set.  Purely presentational: no statistic is ever recomputed here.
"""

from .figures import KINDS, FigureSpec, render
from .io import EmptySelectionError, SchemaMismatchError, read_stats

__all__ = [
    "FigureSpec",
    "KINDS",
    "render",
    "read_stats",
    "SchemaMismatchError",
    "EmptySelectionError",
]
