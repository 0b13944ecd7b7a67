"""Panoptic symbol spotting pipeline for vector CAD drawings."""
__version__ = "0.1.0"
