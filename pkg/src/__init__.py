"""
netchemo Source Module
"""

__version__ = '0.1.0'
