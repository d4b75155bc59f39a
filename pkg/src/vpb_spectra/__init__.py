"""Spectra and decay rates for the linearized Vlasov-Poisson-Boltzmann system."""
__version__ = "0.1.0"
