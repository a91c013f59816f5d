"""evoctl: controlled self-evolution of program efficiency."""

__version__ = "0.1.0"
