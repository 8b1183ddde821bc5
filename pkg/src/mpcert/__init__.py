"""Multi-path certificate exchange for simulated mobile ad hoc networks."""

__version__ = "0.1.0"
