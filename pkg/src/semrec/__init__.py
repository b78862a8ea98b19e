"""semrec: content-based recommendation as dense/sparse/hybrid retrieval."""

__version__ = "0.1.0"
