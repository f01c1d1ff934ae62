"""Numerical core: special functions, curves, layer potentials and polarization tensors."""
