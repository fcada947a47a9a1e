"""Estimating full matrices of nonlinear structural responses from a budgeted subset of simulations."""

__version__ = "0.1.0"
