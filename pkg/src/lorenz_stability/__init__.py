"""Stable/unstable state classification on Lorenz63 trajectories."""

__version__ = "0.1.0"
