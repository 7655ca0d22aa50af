"""Finite-difference solvers for complex Monge-Ampere type Dirichlet problems
on Hermitian backgrounds, with executable comparison/stability/capacity checks."""

__version__ = "0.1.0"
