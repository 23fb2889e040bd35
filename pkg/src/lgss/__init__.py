"""Local-to-global scene segmentation over per-shot multi-modal features."""

__version__ = "0.1.0"
