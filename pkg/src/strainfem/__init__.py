"""Strain-based edge finite elements for pure-traction elasticity."""
