"""Perturbation test-set generation and robustness evaluation for text-to-SQL corpora."""

__version__ = "0.1.0"
