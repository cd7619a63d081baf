"""socnav: learning-from-demonstration toolkit for socially compliant 2D navigation."""

__version__ = "0.1.0"
