"""Category-level 6D pose and size estimation on synthetic point clouds.

A self-contained stack: geometric solvers, a small reverse-mode autodiff
core, relation-enhanced point-cloud encoders, a recurrent canonical-shape
reconstruction network, a deterministic synthetic dataset, and the standard
pose / reconstruction metric suite.
"""

__version__ = "0.1.0"
