"""Recurrent Kolmogorov-Arnold networks on a variable-length pendulum benchmark."""

__version__ = "0.1.0"
