"""Noise-coded illumination: code generation, capture simulation and video forensics."""

__version__ = "0.1.0"
