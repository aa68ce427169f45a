"""Selective learners over loss sequences and their benchmark tooling."""

__version__ = "0.1.0"
