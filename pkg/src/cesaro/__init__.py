"""Numerical toolkit for Cesàro averages of Markov semigroups.

Exact chain kernels, jump-system and SDE simulators, and Monte Carlo probes
for regularity, lower-bound and ergodic-decomposition properties.
"""

__version__ = "0.1.0"
