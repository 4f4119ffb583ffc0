"""Fully nonlinear operators on constant-curvature model spaces: structural
condition checks, barrier certification and discrete maximum principles."""

__version__ = "0.1.0"
