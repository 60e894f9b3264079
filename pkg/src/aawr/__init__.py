"""Asymmetric advantage weighted regression for POMDPs with privileged critics."""

__version__ = "0.1.0"
