"""Gd3+ multilevel spin ensemble coupled to a superconducting resonator."""

__version__ = "0.1.0"
