"""Footfall estimation from Wi-Fi probe requests and directional flow analysis."""

__version__ = "0.1.0"
