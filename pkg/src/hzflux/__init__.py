"""Inferring streambed exchange flux from subsurface temperature records."""

__version__ = "0.1.0"
