"""Tools for generating and evaluating aligned navigation-instruction datasets."""

__version__ = "0.1.0"
