"""Embedding-based job recommendation over a standardized occupation
taxonomy, with reranking and human-judgment evaluation harnesses."""

__version__ = "0.1.0"
