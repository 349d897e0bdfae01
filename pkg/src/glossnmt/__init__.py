"""Gloss-to-text translation with instruction-fused Transformers."""

__version__ = "0.1.0"
