"""Encrypted health-record storage and sharing over a local ledger and content store."""

__version__ = "0.1.0"
