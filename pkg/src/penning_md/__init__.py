"""Molecular dynamics and normal-mode analysis of planar Penning-trap ion crystals."""

__version__ = "0.1.0"
