"""Deterministic simulator for context-aware, dynamically reconfigurable
component applications on heterogeneous hosts."""

__version__ = "0.1.0"
