"""Training-by-sampling with sparse random influence matrices."""

__version__ = "0.1.0"
