"""Vertebral landmark regression with a bipartite-distance shape loss, in numpy."""

__version__ = "0.1.0"
