"""Coherent-feedback Kerr clock: network composition, dynamics and clock statistics."""

__version__ = "0.1.0"
