"""Ancilla-aided integrated detection (AID) simulator."""
__version__ = "0.1.0"
