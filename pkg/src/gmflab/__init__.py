"""Desk-scale laboratory for generalized multimodal fusion (GMF)."""

__version__ = "0.1.0"
