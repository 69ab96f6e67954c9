"""
ke-toolkit source package.
"""
