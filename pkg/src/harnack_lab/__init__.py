"""Numerical laboratory for Li-Yau, Harnack and Huisken-type estimates with drift potentials."""

__version__ = "0.1.0"
