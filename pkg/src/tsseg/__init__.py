"""Timestamp-supervised temporal action segmentation."""
__version__ = "0.1.0"
