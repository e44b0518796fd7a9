"""Mortar staggered DG solver with residual a posteriori estimators and adaptivity."""

__version__ = "0.1.0"
