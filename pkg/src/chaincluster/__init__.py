"""Community detection on blockchain transaction graphs."""

__version__ = "0.1.0"
