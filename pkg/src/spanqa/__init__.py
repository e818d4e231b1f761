"""Extractive question answering over retrieved paragraph lists.

Spans are scored by a conditional start/end decoder, span scores are
aggregated into per-paragraph answer probabilities, and paragraph quality
weights combine them into a single answer distribution.
"""

__version__ = "0.1.0"
