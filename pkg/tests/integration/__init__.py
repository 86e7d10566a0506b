"""
Integration tests for patchvoronoi

End-to-end runs of the pipelines on small fixture geometries.
"""
