"""Information extraction from scientific literature.

Layout-aware text reconstruction, functional-section location, span-based
joint entity/relation extraction, pre-annotation emission, and a human
review service with warm-start retraining.
"""

__version__ = "0.1.0"
