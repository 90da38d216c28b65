"""Compressed-sensing photon-counting LiDAR simulation and reconstruction."""

__version__ = "0.1.0"
