"""Numerical free-boundary inverse mean curvature flow in asymptotically flat half-spaces."""

__version__ = "0.1.0"
