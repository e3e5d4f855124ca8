"""
Test package for maximum likelihood and Fisher geometry
"""
