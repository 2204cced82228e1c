"""Lane-graph construction from fleet traces and boundary observations."""

__version__ = "0.1.0"
