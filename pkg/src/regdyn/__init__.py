"""Regularized dynamical parametric approximation of evolution equations."""

__version__ = "0.1.0"
