"""Desk-scale interactive evaluation harness for task-oriented dialogue."""

__version__ = "0.1.0"
