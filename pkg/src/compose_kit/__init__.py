"""Point cloud completion unified with category-level 6D pose and size estimation."""

__version__ = "0.1.0"
