"""
langdepth: language-conditioned diffusion for monocular relative depth on
procedurally generated scenes.
"""

__version__ = "0.1.0"
