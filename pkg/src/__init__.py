"""Fluxonium readout leakage simulator."""

__version__ = "0.3.0"
