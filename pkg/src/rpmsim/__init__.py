"""Reverse-path congestion marking: packet simulator, data-plane logic and fluid stability tools."""

__version__ = "0.1.0"
