"""Co-simulation of real-time schedules and battery supply for CPS controllers."""

__version__ = "0.1.0"
