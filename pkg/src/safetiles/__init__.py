"""Personalized per-tile travel-safety ratings.

Library surface, HTTP service, and CLI for rating 75 m map squares with a
retrieval-augmented prompt against a pluggable rating backend, streaming
results outward from an origin in spiral order.
"""

__version__ = "0.1.0"
