"""Fingerprint singular-point detection pipeline.

Segments core/delta regions with a dual-branch inception encoder-decoder,
localizes points with an area-filtered blob detector, and scores detections
against ground truth with distance-gated matching.
"""

__version__ = "0.1.0"
