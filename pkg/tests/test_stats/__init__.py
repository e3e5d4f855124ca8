"""
Test package for statistic functionals
"""
