"""Decentralized stochastic optimization over directed graphs, simulated.

Subpackages cover the benchmark topologies, row-/column-stochastic mixing
matrices with their spectral metrics, the synthetic nonconvex logistic
objective, the four iteration schemes, per-run diagnostics, and the seeded
experiment harness behind the ``pushpull`` CLI.
"""

from . import algorithms, diagnostics, harness, mixing, objective, topology

__all__ = ["algorithms", "diagnostics", "harness", "mixing", "objective", "topology"]
__version__ = "0.1.0"
