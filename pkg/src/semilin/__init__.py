"""Finite element solver and experiment harness for semilinear elliptic problems."""

__version__ = "0.1.0"
