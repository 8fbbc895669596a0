"""Spectral simulator and identity-verification suite for fluid-vesicle
relaxation: bending-elastic membranes coupled to bulk and surface Stokes flow
in a spherical container."""

__version__ = "0.1.0"
