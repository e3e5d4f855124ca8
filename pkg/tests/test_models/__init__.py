"""
Test package for model specs, builtin and user models
"""
