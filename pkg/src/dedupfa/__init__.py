"""Frequency-analysis attacks and defenses for encrypted deduplication, on chunk traces."""

__version__ = "0.1.0"
