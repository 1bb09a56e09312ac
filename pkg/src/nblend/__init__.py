"""Neighborhood Blending: an inference-time defense against membership
inference, with the attack suite and sampler audits used to evaluate it."""

__version__ = "0.1.0"
