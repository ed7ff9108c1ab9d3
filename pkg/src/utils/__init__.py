"""
netchemo Utilities Module
"""
