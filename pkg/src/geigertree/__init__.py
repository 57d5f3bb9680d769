"""Reduced-tree structure of critical Galton-Watson processes via Geiger's spine."""
from .offspring import (GfCache, LawError, OffspringLaw, build_law,
                        extinction_probs, spine_step_pmf, tilted_law)

__version__ = "0.1.0"

__all__ = ["GfCache", "LawError", "OffspringLaw", "build_law",
           "extinction_probs", "spine_step_pmf", "tilted_law", "__version__"]
