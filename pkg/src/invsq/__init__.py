"""Schrodinger operators with inverse-square point singularities in 3D."""
__version__ = "0.1.0"
