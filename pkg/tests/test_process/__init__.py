"""
Test package for empirical and projected processes
"""
