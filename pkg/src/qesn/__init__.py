"""Quantum echo-state network observer: exact simulation, response analysis
and elastic-net readout for chaotic time series."""

__version__ = "0.1.0"
