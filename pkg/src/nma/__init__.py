"""Numerical laboratory for the (n-1)-plurisubharmonic Monge-Ampere Dirichlet problem on product Hermitian manifolds."""

__version__ = "0.1.0"
