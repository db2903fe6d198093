"""Differentially private synthetic banking microdata toolkit.

Generates synthetic tabular microdata with marginal-based mechanisms
(spanning-tree measurement, workload-aware iterative selection, and an
aggregate-seeded synthesiser with suppression) and scores the results
through three banking information products: a financial-usage index,
term-deposit yield curves, and credit-card transition matrices.
"""

__version__ = "0.1.0"
