"""Light field transport operators and multi-camera volume reconstruction."""

__version__ = "0.1.0"
