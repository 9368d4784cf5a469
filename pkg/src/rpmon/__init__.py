"""Monitor construction for first-order temporal specifications and monitor-augmented synthesis games."""

__version__ = "0.1.0"
