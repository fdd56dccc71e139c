"""Numerical lab for a counterexample to the Schrödinger maximal estimate."""

__version__ = "0.1.0"
