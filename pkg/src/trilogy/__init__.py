"""Triangulation combinatorics, quantum dilogarithms and flip intertwiners."""

__version__ = "0.1.0"
