"""Variationally consistent mass scaling for explicit finite element dynamics."""

__version__ = "0.1.0"
