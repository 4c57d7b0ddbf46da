"""Simulation and analysis toolkit for Raman quantum-memory storage of
photonic polarisation entanglement."""

__version__ = "0.1.0"
