"""Band-prompted SAR/multi-spectral fusion for LCZ classification."""

__version__ = "0.1.0"
