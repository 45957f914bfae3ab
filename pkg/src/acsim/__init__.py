"""Admission-control simulator for a 7-cell wireless network."""

__version__ = "0.1.0"
