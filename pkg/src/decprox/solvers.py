"""Synchronous round updates for Prox-DASA and Prox-DASA-GT.

Agent variables are stored as ``d x n`` matrices (one column per agent) so a
communication step is a single right-multiplication by the gossip operator.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .oracles import ProblemInstance
from .proximal import ProxOperator
from .topology import Gossip, MixingMatrix

__all__ = [
    "ConstantSqrtNK",
    "Diminishing",
    "Fixed",
    "Explicit",
    "StepSchedule",
    "ScheduleError",
    "DivergenceError",
    "InvariantError",
    "SolverConfig",
    "SolverState",
    "step_size",
    "init_state",
    "prox_dasa_round",
    "prox_dasa_gt_round",
    "run",
    "parse_schedule",
]

ALGORITHMS = ("dasa", "dasa-gt")


class ScheduleError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    """Non-finite iterates; ``iteration`` is the round that produced them."""

    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"non-finite iterate at iteration {iteration}")


class InvariantError(AssertionError):
    pass


@dataclass(frozen=True)
class ConstantSqrtNK:
    """``alpha_k = min(sqrt(n / K), 1)``; ``K=None`` means the run length."""

    K: int | None = None

    def spec(self):
        return "const" if self.K is None else f"const:{self.K}"


@dataclass(frozen=True)
class Diminishing:
    """``alpha_k = min(alpha_base * sqrt(n / max(k, 1)), 1)``."""

    alpha_base: float

    def spec(self):
        return f"dim:{self.alpha_base!r}"


@dataclass(frozen=True)
class Fixed:
    alpha: float

    def spec(self):
        return f"fixed:{self.alpha!r}"


@dataclass(frozen=True)
class Explicit:
    values: tuple[float, ...]

    def spec(self):
        return "list:" + ",".join(repr(v) for v in self.values)


StepSchedule = ConstantSqrtNK | Diminishing | Fixed | Explicit


def step_size(schedule: StepSchedule, k: int, n: int, K: int | None = None) -> float:
    if k < 0:
        raise ValueError(f"iteration must be >= 0, got {k}")
    if isinstance(schedule, ConstantSqrtNK):
        total = schedule.K if schedule.K is not None else K
        if not total:
            raise ScheduleError("constant schedule needs a total iteration count")
        return min(math.sqrt(n / total), 1.0)
    if isinstance(schedule, Diminishing):
        return min(schedule.alpha_base * math.sqrt(n / max(k, 1)), 1.0)
    if isinstance(schedule, Fixed):
        return schedule.alpha
    if isinstance(schedule, Explicit):
        if k >= len(schedule.values):
            raise ScheduleError(f"explicit schedule exhausted at iteration {k}")
        return schedule.values[k]
    raise TypeError(f"unknown schedule {schedule!r}")


def parse_schedule(spec: str) -> StepSchedule:
    """``const``, ``const:<K>``, ``dim:<alpha>``, ``fixed:<alpha>`` or ``list:<a0>,<a1>,...``."""
    kind, _, arg = spec.strip().partition(":")
    try:
        if kind == "const":
            return ConstantSqrtNK(int(arg) if arg else None)
        if kind == "dim" and arg:
            return Diminishing(float(arg))
        if kind == "fixed" and arg:
            alpha = float(arg)
            if not 0 < alpha <= 1:
                raise ValueError("alpha must lie in (0, 1]")
            return Fixed(alpha)
        if kind == "list" and arg:
            return Explicit(tuple(float(v) for v in arg.split(",")))
    except ValueError as exc:
        raise ValueError(f"malformed schedule spec {spec!r}: {exc}") from None
    raise ValueError(f"malformed schedule spec {spec!r}")


@dataclass(frozen=True)
class SolverConfig:
    algorithm: str = "dasa"
    gamma: float = 1.0
    m: int = 1
    chebyshev: bool = False
    schedule: StepSchedule = field(default_factory=ConstantSqrtNK)
    batch: int = 1
    K: int = 1000
    eval_every: int = 50
    check_invariants: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")
        if self.m < 1 or self.batch < 1 or self.K < 0 or self.eval_every < 1:
            raise ValueError("m, batch and eval_every must be >= 1 and K >= 0")

    def alpha(self, k: int, n: int) -> float:
        return step_size(self.schedule, k, n, self.K)


@dataclass
class SolverState:
    k: int
    X: np.ndarray
    Z: np.ndarray
    Y: np.ndarray | None = None
    U: np.ndarray | None = None
    V_prev: np.ndarray | None = None

    def copy(self) -> "SolverState":
        def c(a):
            return None if a is None else a.copy()

        return SolverState(self.k, self.X.copy(), self.Z.copy(), c(self.Y), c(self.U), c(self.V_prev))


def init_state(n: int, d: int, algorithm: str, instance: ProblemInstance, seed: int,
               batch: int = 1) -> SolverState:
    """Zero duals, every agent at the instance's starting point.

    For gradient tracking a first stochastic gradient ``V^0`` is drawn at
    ``X^0`` (stream iteration 0) and the tracker starts at ``U^0 = V^0``.
    """
    X = np.repeat(instance.initial_point()[:, None], n, axis=1)
    Z = np.zeros((d, n))
    state = SolverState(k=0, X=X, Z=Z)
    if algorithm == "dasa-gt":
        V0 = instance.sample_gradients(X, seed, 0, batch)
        state.U = V0.copy()
        state.V_prev = V0
    return state


def _check_finite(k, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DivergenceError(k)


def _check_mean_evolution(state, new, alpha, V):
    xbar = state.X.mean(axis=1)
    ybar = state.Y.mean(axis=1)
    want_x = (1 - alpha) * xbar + alpha * ybar
    drive = V.mean(axis=1)
    want_z = (1 - alpha) * state.Z.mean(axis=1) + alpha * drive
    for got, want in ((new.X.mean(axis=1), want_x), (new.Z.mean(axis=1), want_z)):
        scale = 1.0 + np.max(np.abs(want))
        if np.max(np.abs(got - want)) > 1e-12 * scale:
            raise InvariantError(f"mixing moved a column mean at iteration {state.k}")


def _check_tracking(state: SolverState):
    ubar = state.U.mean(axis=1)
    vbar = state.V_prev.mean(axis=1)
    scale = max(np.linalg.norm(state.V_prev) / math.sqrt(state.V_prev.shape[1]), np.finfo(float).tiny)
    if np.linalg.norm(ubar - vbar) > 1e-10 * scale:
        raise InvariantError(f"tracked gradient mean drifted from sampled mean at iteration {state.k}")


def _local_primal(state, alpha, gamma, prox_op):
    Y = prox_op.prox(state.X - gamma * state.Z, gamma)
    return Y, (1 - alpha) * state.X + alpha * Y


def prox_dasa_round(state: SolverState, gossip: Gossip | MixingMatrix, config: SolverConfig,
                    instance: ProblemInstance, prox_op: ProxOperator, seed: int) -> SolverState:
    """One Prox-DASA iteration: local averaged prox step, fresh gradient, ``m`` gossip rounds."""
    if isinstance(gossip, MixingMatrix):
        gossip = Gossip(gossip, config.m, config.chebyshev)
    k = state.k
    alpha = config.alpha(k, state.X.shape[1])
    Y, X_tilde = _local_primal(state, alpha, config.gamma, prox_op)
    V = instance.sample_gradients(state.X, seed, k + 1, config.batch)
    Z_tilde = (1 - alpha) * state.Z + alpha * V
    new = SolverState(k=k + 1, X=gossip(X_tilde), Z=gossip(Z_tilde))
    _check_finite(k, new.X, new.Z)
    if config.check_invariants:
        _check_mean_evolution(replace(state, Y=Y), new, alpha, V)
    return new


def prox_dasa_gt_round(state: SolverState, gossip: Gossip | MixingMatrix, config: SolverConfig,
                       instance: ProblemInstance, prox_op: ProxOperator, seed: int) -> SolverState:
    """One Prox-DASA-GT iteration; the dual is driven by the tracked gradient ``U + V - V_prev``."""
    if isinstance(gossip, MixingMatrix):
        gossip = Gossip(gossip, config.m, config.chebyshev)
    if state.U is None or state.V_prev is None:
        raise ValueError("gradient-tracking state needs U and V_prev; use init_state(..., 'dasa-gt', ...)")
    k = state.k
    alpha = config.alpha(k, state.X.shape[1])
    Y, X_tilde = _local_primal(state, alpha, config.gamma, prox_op)
    V = instance.sample_gradients(state.X, seed, k + 1, config.batch)
    U_tilde = state.U + V - state.V_prev
    Z_tilde = (1 - alpha) * state.Z + alpha * U_tilde
    new = SolverState(k=k + 1, X=gossip(X_tilde), Z=gossip(Z_tilde), U=gossip(U_tilde), V_prev=V)
    _check_finite(k, new.X, new.Z, new.U)
    if config.check_invariants:
        _check_mean_evolution(replace(state, Y=Y), new, alpha, U_tilde)
        _check_tracking(new)
    return new


ROUNDS = {"dasa": prox_dasa_round, "dasa-gt": prox_dasa_gt_round}


def run(config: SolverConfig, topology: MixingMatrix, instance: ProblemInstance, prox_op: ProxOperator,
        seed: int, metrics_sink: Callable[[SolverState, float, float], None] | None = None,
        timing: bool = False, trajectory: list | None = None) -> SolverState:
    """Run ``config.K`` rounds and report every ``eval_every`` iterations.

    ``metrics_sink(state, alpha_k, wall_ms)`` is called at ``k = 0`` and at each
    multiple of ``eval_every``; ``wall_ms`` is the cumulative solver time when
    ``timing`` is on and ``0.0`` otherwise, keeping outputs byte-stable.  If
    ``trajectory`` is given, the mean iterate after every round is appended.
    """
    n, d = topology.n, instance.d
    if instance.n != n:
        raise ValueError(f"instance has {instance.n} agents but topology has {n}")
    gossip = Gossip(topology, config.m, config.chebyshev)
    step = ROUNDS[config.algorithm]
    state = init_state(n, d, config.algorithm, instance, seed, config.batch)
    if config.check_invariants and state.U is not None:
        _check_tracking(state)
    if trajectory is not None:
        trajectory.append(state.X.mean(axis=1))
    elapsed = 0.0

    def report(st):
        if metrics_sink is None:
            return
        try:
            a = config.alpha(st.k, n)
        except ScheduleError:
            a = float("nan")
        # Y at the evaluated iterate feeds the consensus diagnostics
        st.Y = prox_op.prox(st.X - config.gamma * st.Z, config.gamma)
        metrics_sink(st, a, elapsed * 1e3 if timing else 0.0)

    report(state)
    for _ in range(config.K):
        t0 = time.perf_counter()
        state = step(state, gossip, config, instance, prox_op, seed)
        elapsed += time.perf_counter() - t0
        if trajectory is not None:
            trajectory.append(state.X.mean(axis=1))
        if state.k % config.eval_every == 0:
            report(state)
    return state

