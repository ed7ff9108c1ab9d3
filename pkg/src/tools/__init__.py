"""
netchemo Tools Module
"""
