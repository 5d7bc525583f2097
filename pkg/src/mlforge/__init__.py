"""mlforge: textual ML-task descriptions in, verified optimized programs out."""

__version__ = "0.1.0"
