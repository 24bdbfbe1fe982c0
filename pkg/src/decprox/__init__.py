"""Decentralized proximal averaged stochastic approximation (Prox-DASA / Prox-DASA-GT)."""

from .metrics import Evaluator, MeritParams, MetricsRecord
from .oracles import (
    RngStream,
    generate_heterogeneous_quadratic,
    generate_linear_regression,
    generate_phase_retrieval,
)
from .proximal import L1, BoxIndicator, L2Ball, Zero
from .solvers import SolverConfig, SolverState, run
from .topology import MixingMatrix, build_complete, build_random_connected, build_ring, validate

__version__ = "0.1.0"
