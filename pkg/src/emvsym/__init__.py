"""Symbolic model of EMV card payments and a checker for its security properties."""

__version__ = "0.1.0"
