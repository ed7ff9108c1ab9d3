"""
netchemo Test Suite
"""
