"""Terahertz-band power-domain NOMA simulation toolkit."""

__version__ = "0.1.0"
