"""Throughput and delay of a buffer-aided two-way relay with adaptive mode selection."""

__version__ = "0.1.0"
