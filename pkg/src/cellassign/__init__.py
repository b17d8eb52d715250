"""Capacity-constrained phone-to-base-station association as QUBO."""

__version__ = "0.1.0"
