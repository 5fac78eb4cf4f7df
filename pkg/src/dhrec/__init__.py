"""Interactive content-type recommendation with RL agents on a simulated live-broadcast room."""

__version__ = "0.1.0"
