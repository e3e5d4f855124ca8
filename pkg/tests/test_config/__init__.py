"""
Test package for configuration and logging
"""
