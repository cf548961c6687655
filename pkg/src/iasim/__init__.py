"""Interference alignment simulation toolkit for the K-user MIMO interference channel."""

__version__ = "0.1.0"
