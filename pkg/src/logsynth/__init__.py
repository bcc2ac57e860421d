"""Static-analysis driven synthesis of labeled log sequences from Java sources."""

__version__ = "0.1.0"
