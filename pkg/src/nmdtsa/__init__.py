"""Nonlinear modal decoupling based transient stability analysis."""
__version__ = "0.1.0"
