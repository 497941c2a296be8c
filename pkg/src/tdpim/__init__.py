"""Simulator and analytical model for time-domain ReRAM processing-in-memory accelerators."""

__version__ = "0.1.0"
