"""Enclosure-method reconstruction of penetrable inclusions in anisotropic media."""
__version__ = "0.1.0"
