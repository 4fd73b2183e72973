"""Simulation and key-derivation toolkit for physical obfuscated keys."""

__version__ = "0.1.0"
