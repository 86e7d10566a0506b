"""
Unit tests for patchvoronoi

One module per package module.
"""
