"""racebench: desk-scale 1:10 autonomous-racing benchmark suite."""

__version__ = "0.1.0"
