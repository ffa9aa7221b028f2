"""SIMbox bypass-fraud detection on synthetic CDR data."""

__version__ = "0.1.0"
