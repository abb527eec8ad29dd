"""Check-worthiness ranking of transcript sentences with text and audio models."""

__version__ = "0.1.0"
