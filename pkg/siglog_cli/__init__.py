"""siglog CLI - sigma-lognormal handwriting analysis pipeline."""
__version__ = "0.1.0"
