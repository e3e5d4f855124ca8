"""
k2gof - Goodness-of-fit testing of multivariate parametric models

Candidate models are tested through projected empirical processes rotated
onto a single reference model, so one simulated null distribution
calibrates every candidate.
"""

__version__ = "0.1.0"
