"""Communication graphs, mixing matrices and gossip operators.

A mixing matrix acts on the right of a ``d x n`` matrix whose columns are the
agents' local vectors, so ``A @ W`` replaces every column with a weighted
average of its neighbours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

__all__ = [
    "MixingMatrix",
    "MixingMatrixError",
    "SymmetryError",
    "StochasticityError",
    "NegativityError",
    "DisconnectedGraphError",
    "ConnectivityError",
    "ShapeError",
    "build_ring",
    "build_complete",
    "build_random_connected",
    "metropolis_weights",
    "validate",
    "mix",
    "chebyshev_mix",
    "varrho",
    "Gossip",
    "parse_topology",
]

TOL = 1e-12
MAX_REDRAWS = 1000


class MixingMatrixError(ValueError):
    """Base class for rejected mixing matrices."""


class SymmetryError(MixingMatrixError):
    pass


class StochasticityError(MixingMatrixError):
    pass


class NegativityError(MixingMatrixError):
    pass


class DisconnectedGraphError(MixingMatrixError):
    pass


class ConnectivityError(RuntimeError):
    """No connected random graph was found within the redraw budget."""


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class MixingMatrix:
    """A validated symmetric doubly stochastic gossip matrix.

    Attributes
    ----------
    weights : ndarray of shape (n, n)
    rho : float
        Largest magnitude among the non-unit eigenvalues; ``0 <= rho < 1``.
    """

    weights: np.ndarray = field(repr=False)
    rho: float

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        """Unordered adjacent pairs ``(i, j)`` with ``i < j`` and ``w_ij > 0``."""
        i, j = np.nonzero(np.triu(self.weights, k=1) > 0)
        return list(zip(i.tolist(), j.tolist()))


def _spectral_rho(W: np.ndarray) -> float:
    n = W.shape[0]
    if n == 1:
        return 0.0
    eig = np.sort(np.linalg.eigvalsh(W))[::-1]
    rho = float(max(abs(eig[1]), abs(eig[-1])))
    # eigenvalues at round-off level are exact zeros (complete graph, ring of 3)
    if rho < 64 * n * np.finfo(float).eps:
        rho = 0.0
    return rho


def validate(W) -> MixingMatrix:
    """Check Assumption-style gossip conditions and compute ``rho``.

    Raises
    ------
    ShapeError
        If ``W`` is not a square 2-d matrix.
    SymmetryError, StochasticityError, NegativityError, DisconnectedGraphError
    """
    W = np.array(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1] or W.shape[0] == 0:
        raise ShapeError(f"mixing matrix must be square and non-empty, got shape {W.shape}")
    if np.max(np.abs(W - W.T)) > TOL:
        raise SymmetryError("mixing matrix is not symmetric")
    if np.any(W < 0):
        raise NegativityError("mixing matrix has negative entries")
    if np.max(np.abs(W.sum(axis=1) - 1.0)) > TOL or np.max(np.abs(W.sum(axis=0) - 1.0)) > TOL:
        raise StochasticityError("row or column sums differ from 1")
    rho = _spectral_rho(W)
    if rho >= 1.0 - TOL:
        raise DisconnectedGraphError(f"second eigenvalue magnitude is {rho!r}; graph is disconnected")
    W.setflags(write=False)
    return MixingMatrix(weights=W, rho=rho)


def _check_n(n: int) -> None:
    if int(n) != n or n < 1:
        raise ValueError(f"agent count must be a positive integer, got {n!r}")


def build_ring(n: int, self_weight: float = 1.0 / 3.0) -> MixingMatrix:
    """Ring where every agent keeps ``self_weight`` and splits the rest between its two neighbours.

    ``n = 1`` gives the identity; ``n = 2`` gives two agents exchanging ``1 - self_weight``.
    """
    _check_n(n)
    if not 0.0 < self_weight < 1.0:
        raise ValueError(f"self_weight must lie in (0, 1), got {self_weight!r}")
    if n == 1:
        return validate(np.ones((1, 1)))
    if n == 2:
        s = self_weight
        return validate(np.array([[s, 1.0 - s], [1.0 - s, s]]))
    W = np.zeros((n, n))
    side = (1.0 - self_weight) / 2.0
    idx = np.arange(n)
    W[idx, idx] = self_weight
    W[idx, (idx + 1) % n] = side
    W[idx, (idx - 1) % n] = side
    return validate(W)


def build_complete(n: int) -> MixingMatrix:
    _check_n(n)
    return validate(np.full((n, n), 1.0 / n))


def metropolis_weights(adjacency) -> np.ndarray:
    """Metropolis-Hastings weights ``1 / (1 + max(deg_i, deg_j))`` on the edges of an undirected graph."""
    A = np.asarray(adjacency, dtype=bool)
    A = A & ~np.eye(A.shape[0], dtype=bool)
    deg = A.sum(axis=1)
    W = np.where(A, 1.0 / (1.0 + np.maximum.outer(deg, deg)), 0.0)
    W[np.diag_indices_from(W)] = 1.0 - W.sum(axis=1)
    return W


def build_random_connected(n: int, edge_prob: float, seed: int) -> MixingMatrix:
    """Erdos-Renyi graph, redrawn until connected, with Metropolis-Hastings weights."""
    _check_n(n)
    if n < 2:
        raise ValueError("random graph needs at least two agents")
    if not 0.0 < edge_prob <= 1.0:
        raise ValueError(f"edge_prob must lie in (0, 1], got {edge_prob!r}")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, k=1)
    for _ in range(MAX_REDRAWS):
        A = np.zeros((n, n), dtype=bool)
        A[iu] = rng.random(iu[0].size) < edge_prob
        A |= A.T
        ncomp, _ = connected_components(A, directed=False)
        if ncomp == 1:
            return validate(metropolis_weights(A))
    raise ConnectivityError(
        f"no connected graph with n={n}, edge_prob={edge_prob} after {MAX_REDRAWS} draws"
    )


def _check_columns(A: np.ndarray, W: MixingMatrix) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[1] != W.n:
        raise ShapeError(f"expected a matrix with {W.n} columns, got shape {A.shape}")
    return A


def mix(A, W: MixingMatrix, m: int = 1) -> np.ndarray:
    """Return ``A W^m``."""
    A = _check_columns(A, W)
    if m < 1:
        raise ValueError(f"rounds must be >= 1, got {m}")
    return A @ np.linalg.matrix_power(W.weights, m)


def chebyshev_mix(A, W: MixingMatrix, m: int = 1) -> np.ndarray:
    """Chebyshev-accelerated mixing over ``m`` rounds.

    Runs the three-term recursion ``A_{t+1} = (2 mu_t / (rho mu_{t+1})) A_t W
    - (mu_{t-1} / mu_{t+1}) A_{t-1}`` with ``mu_0 = 1``, ``mu_1 = 1 / rho`` and
    ``mu_{t+1} = (2 / rho) mu_t - mu_{t-1}``.  When ``rho == 0`` one plain round
    is already exact consensus and is returned instead.
    """
    A = _check_columns(A, W)
    if m < 1:
        raise ValueError(f"rounds must be >= 1, got {m}")
    rho = W.rho
    if rho == 0.0:
        return A @ W.weights
    prev, cur = A, A @ W.weights
    mu_prev, mu = 1.0, 1.0 / rho
    for _ in range(1, m):
        mu_next = (2.0 / rho) * mu - mu_prev
        nxt = (2.0 * mu / (rho * mu_next)) * (cur @ W.weights) - (mu_prev / mu_next) * prev
        prev, cur = cur, nxt
        mu_prev, mu = mu, mu_next
    return cur


def varrho(rho: float, m: int) -> float:
    """Topology factor ``(1 + rho^{2m}) rho^{2m} / (1 - rho^{2m})^2``."""
    if not 0.0 <= rho < 1.0:
        raise ValueError(f"rho must lie in [0, 1), got {rho!r}")
    if m < 1:
        raise ValueError(f"rounds must be >= 1, got {m}")
    r = rho ** (2 * m)
    return (1.0 + r) * r / (1.0 - r) ** 2


def auto_rounds(rho: float, chebyshev: bool = False) -> int:
    """``ceil(1/(1-rho))`` rounds, or ``ceil(1/sqrt(1-rho))`` with Chebyshev mixing."""
    gap = 1.0 - rho
    return max(1, math.ceil(1.0 / (math.sqrt(gap) if chebyshev else gap)))


@dataclass(frozen=True)
class Gossip:
    """The per-iteration communication step used by the solvers.

    Plain mixing caches ``W^m`` once; Chebyshev mixing runs the recursion on
    every call so each communicated matrix goes through it independently.
    """

    W: MixingMatrix
    m: int = 1
    chebyshev: bool = False
    _power: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"rounds must be >= 1, got {self.m}")
        object.__setattr__(self, "_power", np.linalg.matrix_power(self.W.weights, self.m))

    def __call__(self, A: np.ndarray) -> np.ndarray:
        if self.chebyshev:
            return chebyshev_mix(A, self.W, self.m)
        if A.shape[1] != self.W.n:
            raise ShapeError(f"expected a matrix with {self.W.n} columns, got shape {A.shape}")
        return A @ self._power


def parse_topology(spec: str) -> MixingMatrix:
    """Build a mixing matrix from ``ring:<n>:<w>``, ``complete:<n>`` or ``random:<n>:<p>:<seed>``."""
    parts = spec.strip().split(":")
    kind, args = parts[0].lower(), parts[1:]
    try:
        if kind == "ring" and len(args) in (1, 2):
            w = float(args[1]) if len(args) == 2 else 1.0 / 3.0
            return build_ring(int(args[0]), w)
        if kind == "complete" and len(args) == 1:
            return build_complete(int(args[0]))
        if kind == "random" and len(args) == 3:
            return build_random_connected(int(args[0]), float(args[1]), int(args[2]))
    except ValueError as exc:
        if isinstance(exc, MixingMatrixError):
            raise
        raise ValueError(f"malformed topology spec {spec!r}: {exc}") from None
    raise ValueError(f"malformed topology spec {spec!r}")


def topology_agents(spec: str) -> int:
    return int(spec.split(":")[1])


def with_agents(spec: str, n: int) -> str:
    """Same topology spec with the agent count replaced."""
    parts = spec.strip().split(":")
    parts[1] = str(n)
    return ":".join(parts)
