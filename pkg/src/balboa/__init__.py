"""Covert byte channel embedded in the TLS 1.2 traffic of unmodified applications."""

__version__ = "0.1.0"
