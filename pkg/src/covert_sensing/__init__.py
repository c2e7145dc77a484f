"""Covert quantum sensing: exponents, covertness certificates and discrimination tools."""

__version__ = "0.1.0"
