"""Grover-based SAT solving: sequential, parallel (entangled copies) and distributed circuits."""

__version__ = "0.1.0"
