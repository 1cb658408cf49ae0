"""Discrete-event packet simulator."""
