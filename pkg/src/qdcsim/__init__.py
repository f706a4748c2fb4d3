"""Simulation and resource estimation for quantum data centers (QRAM + quantum networks)."""

__version__ = "0.1.0"
