"""Design-time software performance assessment toolkit."""
__version__ = "1.0.0"
