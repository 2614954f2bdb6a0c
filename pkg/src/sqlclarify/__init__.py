"""Interactive repair loop for black-box text-to-SQL parsers."""

__version__ = "0.1.0"
