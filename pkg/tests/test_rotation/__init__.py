"""
Test package for the unitary rotation
"""
