"""Collaborative block construction on a 16x16x16 gravity-constrained board:
instruction grammar, clarification dialogue, relational shape memory,
transactional executor, evaluation harness and session service."""

__version__ = "0.1.0"
