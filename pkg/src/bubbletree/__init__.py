"""Concentration, blow-up and bubble-tree analysis of conformal metric sequences."""

__version__ = "0.1.0"
