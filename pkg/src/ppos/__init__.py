"""Private proof-of-solvency toolkit."""

__version__ = "0.1.0"
