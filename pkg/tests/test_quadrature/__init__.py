"""
Test package for grid quadrature
"""
