"""Blockage-aware hierarchical codebooks and RIS-assisted beam training for movable-antenna arrays."""

__version__ = "0.1.0"
