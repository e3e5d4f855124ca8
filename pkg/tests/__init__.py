"""
Test package for k2gof
"""
