"""Desk-scale laboratory for the homogeneous Landau equation and the
conservative particle systems whose mean-field limit it is."""

__version__ = "0.1.0"
