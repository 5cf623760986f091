"""finslerlab: pointwise Finsler geometry by truncated Taylor jets."""

__version__ = "0.1.0"
