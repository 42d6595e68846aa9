"""Coordinated EV charging schedules and transformer hosting-capacity campaigns."""

__version__ = "0.1.0"
