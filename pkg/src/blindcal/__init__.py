"""Blind calibration of measurement errors from projective Pauli tomography data."""

__version__ = "0.1.0"
