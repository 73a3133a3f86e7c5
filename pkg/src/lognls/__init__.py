"""Ground states and critical points of the discrete logarithmic Schroedinger equation."""

__version__ = "0.1.0"
