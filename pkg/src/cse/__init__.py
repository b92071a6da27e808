"""Counterfactual subobject explanations: segment, attribute, greedily mask."""

__version__ = "0.1.0"
