"""Fog-of-war state estimation: feature maps, tied encoder-decoder, winner classifier, combat policies."""

__version__ = "0.1.0"
