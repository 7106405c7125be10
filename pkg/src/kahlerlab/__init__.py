"""kahlerlab: numerics for complete Ricci-flat Kähler metrics near a divisor."""

__version__ = "0.1.0"
