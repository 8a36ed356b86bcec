"""Hypergraph attention + latent ODE root-cause localization for microservices."""

__version__ = "0.1.0"
