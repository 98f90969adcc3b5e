"""Voxel thermal histories for laser metal deposition and iterative
extremely-randomized-trees forecasting of future voxel temperatures."""

__version__ = "0.1.0"
