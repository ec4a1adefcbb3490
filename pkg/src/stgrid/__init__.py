"""Adaptive path planning over a spatiotemporal hidden-Markov grid map."""

__version__ = "0.1.0"
