"""Numerical laboratory for Christoffel-Darboux kernels and Nevai operators."""
