"""Non-smooth regularizers with closed-form proximal maps.

Every operator accepts either a single ``d``-vector or a ``d x n`` matrix of
agent columns; matrices are processed column by column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ProxOperator",
    "Zero",
    "L1",
    "BoxIndicator",
    "L2Ball",
    "psi_value",
    "prox",
    "gradient_mapping",
    "eta",
    "parse_prox",
]


class ProxOperator:
    """A closed proper convex function ``Psi`` together with its proximal map."""

    def value(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def prox(self, x: np.ndarray, gamma: float) -> np.ndarray:
        raise NotImplementedError

    def spec(self) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(ProxOperator):
    def value(self, x):
        return 0.0

    def prox(self, x, gamma):
        return np.array(x, dtype=float, copy=True)

    def spec(self):
        return "zero"


@dataclass(frozen=True)
class L1(ProxOperator):
    """``lam * ||x||_1``; its prox is soft thresholding at ``gamma * lam``."""

    lam: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError(f"L1 penalty must be >= 0, got {self.lam!r}")

    def value(self, x):
        return float(self.lam * np.sum(np.abs(x)))

    def prox(self, x, gamma):
        x = np.asarray(x, dtype=float)
        return np.sign(x) * np.maximum(np.abs(x) - gamma * self.lam, 0.0)

    def spec(self):
        return f"l1:{self.lam!r}"


@dataclass(frozen=True)
class BoxIndicator(ProxOperator):
    """Indicator of ``lower <= x <= upper`` (scalars broadcast over coordinates)."""

    lower: float | np.ndarray
    upper: float | np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.lower) > np.asarray(self.upper)):
            raise ValueError("box lower bound exceeds upper bound")

    def _bounds(self, x):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if x.ndim == 2 and lo.ndim == 1:
            lo, hi = lo[:, None], hi[:, None]
        return lo, hi

    def value(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = self._bounds(x)
        return 0.0 if np.all((x >= lo) & (x <= hi)) else np.inf

    def prox(self, x, gamma):
        x = np.asarray(x, dtype=float)
        lo, hi = self._bounds(x)
        return np.clip(x, lo, hi)

    def spec(self):
        if np.ndim(self.lower) or np.ndim(self.upper):
            raise ValueError("per-coordinate boxes have no spec string")
        return f"box:{float(self.lower)!r}:{float(self.upper)!r}"


@dataclass(frozen=True)
class L2Ball(ProxOperator):
    """Indicator of the Euclidean ball of the given radius."""

    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"ball radius must be > 0, got {self.radius!r}")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        norms = np.linalg.norm(x, axis=0)
        return 0.0 if np.all(norms <= self.radius * (1 + 1e-12)) else np.inf

    def prox(self, x, gamma):
        x = np.asarray(x, dtype=float)
        norms = np.linalg.norm(x, axis=0)
        scale = self.radius / np.maximum(norms, self.radius)
        return x * scale

    def spec(self):
        return f"l2ball:{self.radius!r}"


def _check_gamma(gamma):
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma!r}")


def psi_value(op: ProxOperator, x) -> float:
    """``Psi(x)``; ``inf`` outside the effective domain."""
    return op.value(np.asarray(x, dtype=float))


def prox(op: ProxOperator, gamma: float, x) -> np.ndarray:
    """``argmin_y ||y - x||^2 / (2 gamma) + Psi(y)``."""
    _check_gamma(gamma)
    return op.prox(np.asarray(x, dtype=float), gamma)


def gradient_mapping(x, z, gamma: float, op: ProxOperator) -> np.ndarray:
    """Proximal gradient mapping ``(x - prox(x - gamma z)) / gamma``."""
    _check_gamma(gamma)
    x = np.asarray(x, dtype=float)
    return (x - op.prox(x - gamma * np.asarray(z, dtype=float), gamma)) / gamma


def eta(x, z, gamma: float, op: ProxOperator) -> float:
    """``min_y <z, y - x> + ||y - x||^2 / (2 gamma) + Psi(y)``, evaluated at the prox minimizer."""
    _check_gamma(gamma)
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    y = op.prox(x - gamma * z, gamma)
    step = y - x
    return float(z @ step + step @ step / (2.0 * gamma) + op.value(y))


def parse_prox(spec: str) -> ProxOperator:
    """Parse ``zero``, ``l1:<lambda>``, ``box:<lo>:<hi>`` or ``l2ball:<r>``."""
    parts = spec.strip().split(":")
    kind, args = parts[0].lower(), parts[1:]
    try:
        if kind == "zero" and not args:
            return Zero()
        if kind == "l1" and len(args) == 1:
            return L1(float(args[0]))
        if kind == "box" and len(args) == 2:
            return BoxIndicator(float(args[0]), float(args[1]))
        if kind == "l2ball" and len(args) == 1:
            return L2Ball(float(args[0]))
    except ValueError as exc:
        raise ValueError(f"malformed prox spec {spec!r}: {exc}") from None
    raise ValueError(f"malformed prox spec {spec!r}")
