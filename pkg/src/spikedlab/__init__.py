"""Simulation and analysis of gradient/Langevin dynamics on spiked spherical landscapes."""

from .landscape import (INFINITY, Disorder, MixtureSpec, correlation, energy,
                        sample_disorder)

__version__ = "0.1.0"

__all__ = ["INFINITY", "Disorder", "MixtureSpec", "correlation", "energy", "sample_disorder"]
