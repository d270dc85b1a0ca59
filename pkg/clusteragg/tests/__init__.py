"""
Test suite for the robust aggregation lab.
"""
