"""Agent-driven urban land use simulator."""

__version__ = "0.1.0"
