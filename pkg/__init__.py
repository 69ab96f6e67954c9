"""
ke-toolkit package.

Computes the Knowledge Eccentricity (KE) novelty indicator for scholarly
works from OpenAlex reference graphs and analyzes it across cohorts.
"""

__version__ = "0.1.0"
