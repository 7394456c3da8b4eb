"""Particle and spectral solvers for semiconvex Newton, Jeans-Vlasov,
sticky-particle and elastodynamics systems, with checkers for their
a-priori estimates."""

__version__ = "0.1.0"
