"""Exact workbench for hard-core lattice particle systems."""

__version__ = "0.1.0"
