"""Euclidean distance matrix parameterisation and a WGAN-GP for point-cloud generation."""

from .edm import PointSet, edm_from_points, embed, embedding_dimension, is_edm

__all__ = ["PointSet", "edm_from_points", "embed", "embedding_dimension", "is_edm"]
__version__ = "0.1.0"
