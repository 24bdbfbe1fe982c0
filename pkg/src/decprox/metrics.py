"""Stationarity, consensus and merit measurements.

All measurements use exact gradients from the problem instance, never
stochastic samples.
"""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields

import numpy as np

from .oracles import ProblemInstance
from .proximal import ProxOperator, eta, gradient_mapping
from .solvers import InvariantError
from .topology import MixingMatrix

__all__ = [
    "MetricsRecord",
    "MeritParams",
    "stationarity",
    "consensus_error",
    "dual_gap",
    "per_agent_stationarity",
    "merit",
    "pairwise_consensus",
    "Evaluator",
    "CSV_FIELDS",
    "write_csv",
    "final_window",
]


@dataclass(frozen=True)
class MetricsRecord:
    k: int
    alpha_k: float
    stationarity: float
    consensus_x: float
    consensus_z: float
    dual_gap: float
    per_agent_stationarity: float
    merit: float
    pairwise_consensus: float
    objective: float
    test_loss: float
    wall_ms: float


CSV_FIELDS = tuple(f.name for f in fields(MetricsRecord))


@dataclass(frozen=True)
class MeritParams:
    """Merit weight ``lambda_w``, step ``gamma`` and lower bound ``phi_star`` (``None``: running minimum)."""

    lambda_w: float
    gamma: float
    phi_star: float | None = None

    def __post_init__(self):
        if not self.lambda_w > 0:
            raise ValueError("merit weight must be > 0")

    @classmethod
    def default(cls, gamma: float, instance: ProblemInstance) -> "MeritParams":
        L = instance.smoothness_bound
        return cls(lambda_w=1.0 / (gamma * 8.0 * L * L), gamma=gamma, phi_star=instance.phi_star)


def stationarity(xbar, grad, gamma: float, prox_op: ProxOperator) -> float:
    g = gradient_mapping(xbar, grad, gamma, prox_op)
    return float(g @ g)


def consensus_error(M) -> float:
    """``(1/n) sum_i ||m_i - mbar||^2`` over the columns of ``M``."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[None, :]
    dev = M - M.mean(axis=1, keepdims=True)
    return float(np.sum(dev * dev) / M.shape[1])


def dual_gap(zbar, grad) -> float:
    diff = np.asarray(zbar, dtype=float) - np.asarray(grad, dtype=float)
    return float(np.sum(diff * diff))


def per_agent_stationarity(X, gamma: float, L: float, instance: ProblemInstance, prox_op: ProxOperator) -> float:
    """Averaged local stationarity plus ``L^2``-weighted deviation from the mean iterate."""
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    xbar = X.mean(axis=1)
    total = 0.0
    for i in range(n):
        xi = X[:, i]
        g = gradient_mapping(xi, instance.true_mean_gradient(xi), gamma, prox_op)
        dev = xi - xbar
        total += g @ g + L * L * (dev @ dev)
    return float(total / n)


def merit(xbar, zbar, params: MeritParams, instance: ProblemInstance, prox_op: ProxOperator,
          phi_star: float | None = None) -> float:
    """Function-value gap + primal gap ``Psi - eta`` + ``lambda_w``-weighted dual gap.

    ``phi_star`` overrides ``params.phi_star`` (used for a running minimum).

    Raises
    ------
    ValueError
        If ``xbar`` lies outside the domain of ``Psi``.
    """
    xbar = np.asarray(xbar, dtype=float)
    zbar = np.asarray(zbar, dtype=float)
    gamma = params.gamma
    psi = prox_op.value(xbar)
    if not math.isfinite(psi):
        raise ValueError("mean iterate lies outside the domain of Psi")
    lower = params.phi_star if phi_star is None else phi_star
    phi = instance.objective_value(xbar) + psi
    value_gap = phi - lower
    dual = eta(xbar, zbar, gamma, prox_op)
    primal = psi - dual
    g = gradient_mapping(xbar, zbar, gamma, prox_op)
    floor = 0.5 * gamma * (g @ g)
    if primal < floor - 1e-9 * (1.0 + abs(psi) + abs(dual) + floor):
        raise ArithmeticError("primal gap fell below its strong-convexity lower bound")
    grad = instance.true_mean_gradient(xbar)
    return float(value_gap + primal + params.lambda_w * dual_gap(zbar, grad))


def pairwise_consensus(M, W: MixingMatrix) -> float:
    """Sum of ``||m_i - m_j||^2`` over adjacent pairs ``i < j``."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[None, :]
    if M.shape[1] != W.n:
        raise ValueError(f"expected {W.n} columns, got {M.shape[1]}")
    total = 0.0
    for i, j in W.edges():
        diff = M[:, i] - M[:, j]
        total += diff @ diff
    return float(total)


class Evaluator:
    """Turns solver snapshots into :class:`MetricsRecord` rows.

    Tracks a running minimum of ``Phi(xbar)`` when the instance has no known
    lower bound, and optionally checks the proximal-point consensus bound
    ``||Y - Ybar||^2 <= 2(||X - Xbar||^2 + gamma^2 ||Z - Zbar||^2)``.
    """

    def __init__(self, instance: ProblemInstance, prox_op: ProxOperator, gamma: float,
                 W: MixingMatrix | None = None, merit_params: MeritParams | None = None,
                 pairwise: bool = True, check_invariants: bool = False):
        self.instance = instance
        self.prox_op = prox_op
        self.gamma = gamma
        self.W = W
        self.params = merit_params or MeritParams.default(gamma, instance)
        self.pairwise = pairwise and W is not None
        self.check_invariants = check_invariants
        self.records: list[MetricsRecord] = []
        self._phi_min = math.inf

    def __call__(self, state, alpha_k: float, wall_ms: float) -> MetricsRecord:
        inst, op, gamma = self.instance, self.prox_op, self.gamma
        n = state.X.shape[1]
        xbar = state.X.mean(axis=1)
        zbar = state.Z.mean(axis=1)
        grad = inst.true_mean_gradient(xbar)
        cx = consensus_error(state.X)
        cz = consensus_error(state.Z)
        if self.check_invariants and state.Y is not None:
            cy = consensus_error(state.Y)
            bound = 2.0 * (cx + gamma * gamma * cz)
            if cy > bound + 1e-12 * (1.0 + bound):
                raise InvariantError(f"prox-point consensus bound violated at iteration {state.k}")
        phi = inst.objective_value(xbar) + op.value(xbar)
        phi_star = self.params.phi_star
        if phi_star is None:
            self._phi_min = min(self._phi_min, phi)
            phi_star = self._phi_min
        try:
            w = merit(xbar, zbar, self.params, inst, op, phi_star=phi_star)
        except ValueError:
            w = math.inf
        rec = MetricsRecord(
            k=state.k,
            alpha_k=alpha_k,
            stationarity=stationarity(xbar, grad, gamma, op),
            consensus_x=cx,
            consensus_z=cz,
            dual_gap=dual_gap(zbar, grad),
            per_agent_stationarity=per_agent_stationarity(state.X, gamma, inst.smoothness_bound, inst, op),
            merit=w,
            pairwise_consensus=pairwise_consensus(state.X, self.W) if self.pairwise else math.nan,
            objective=phi,
            test_loss=inst.test_loss(xbar),
            wall_ms=wall_ms,
        )
        self.records.append(rec)
        return rec

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path, records) -> None:
    """One header row, then one row per record with 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for rec in records:
            writer.writerow([_fmt(v) for v in astuple(rec)])


def read_csv(path) -> list[dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def final_window(values, fraction: float = 0.1) -> float:
    """Mean of the last ``fraction`` of a series (at least one entry)."""
    values = np.asarray(values, dtype=float)
    w = max(1, int(math.ceil(fraction * len(values))))
    return float(values[-w:].mean())
