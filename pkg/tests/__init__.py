"""
Tests for extcert; see slow_testing for the full-size runs.
"""
