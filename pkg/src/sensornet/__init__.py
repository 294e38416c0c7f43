"""Friends-as-sensors toolkit: friendship-paradox sampling, SIR cascades and lead-time statistics."""

__version__ = "0.1.0"
