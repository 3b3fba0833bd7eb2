"""Learning vehicle routing preferences from historical routings."""

__version__ = "0.1.0"
