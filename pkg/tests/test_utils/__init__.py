"""
Test package for data input and output
"""
