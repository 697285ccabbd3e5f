"""Plaintext rewriters for the supported application protocols."""
