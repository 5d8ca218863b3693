"""Sequential two-phase flow simulator with flux-reordered dG transport."""
__version__ = "0.1.0"
