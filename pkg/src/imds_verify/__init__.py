"""Deadlock verification for systems in the Integrated Model of Distributed Systems."""

__version__ = "0.1.0"
