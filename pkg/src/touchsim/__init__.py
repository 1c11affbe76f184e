"""Deterministic simulator of a touch-controller I2C stack under hardware attack."""

__version__ = "0.1.0"
