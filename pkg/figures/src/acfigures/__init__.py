"""Read-only figure rendering for the simulator's CSV outputs."""

__version__ = "0.1.0"
