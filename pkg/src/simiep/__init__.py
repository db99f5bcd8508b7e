"""Symbol-level precoding for stacked intelligent metasurfaces under amplifier nonlinearity."""

__version__ = "0.1.0"
