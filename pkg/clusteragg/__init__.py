"""
Clustering-with-outliers robust aggregation and two-phase Byzantine-resilient training lab.
"""

__version__ = "0.3.0"
