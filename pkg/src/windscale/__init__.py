"""Conditional WGAN-GP downscaling of near-surface wind fields."""

__version__ = "0.1.0"
