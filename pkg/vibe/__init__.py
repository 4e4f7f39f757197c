"""Topic-driven temporal adaptation for text classification."""

__version__ = "0.1.0"
