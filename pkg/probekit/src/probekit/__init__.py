"""probekit: sandbox-side probe executables and toy-model fixtures."""

__version__ = "0.1.0"
