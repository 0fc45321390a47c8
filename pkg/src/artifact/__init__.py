"""Cyclic Toda equations on planar domains: discretization, monotone solvers,
existence constructions and harmonic-bundle diagnostics."""

__version__ = "0.1.0"
