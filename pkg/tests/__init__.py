"""
patchvoronoi tests package
"""
