"""Quaternion tools for band topology: lattice Chern numbers, quaternion
eigenstate maps, PCA diagnostics and quaternion convolutional classifiers."""

__version__ = "0.1.0"
