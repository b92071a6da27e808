"""Trainer for the toy unsafe-image classifier; exports CSEW weight files."""

__version__ = "0.1.0"
