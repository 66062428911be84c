"""Dispersion-managed Gross-Pitaevskii simulations in elliptical ring waveguides."""

__version__ = "0.1.0"
