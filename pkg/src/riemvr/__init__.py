"""Loopless variance-reduced stochastic optimization on Riemannian manifolds."""

__version__ = "0.1.0"
