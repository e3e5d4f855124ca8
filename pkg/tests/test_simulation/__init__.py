"""
Test package for replication, p-values and power
"""
