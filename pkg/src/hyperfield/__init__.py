"""Hyper-space neural fields: deformation plus slicing over a higher-dimensional template."""

__version__ = "0.1.0"
