"""Disentangled interest/conformity recommendation: training and intervened evaluation."""

__version__ = "0.1.0"
