"""Synthetic decentralized problems and their gradient oracles.

Stochastic draws come from :class:`RngStream`, a counter-based Philox stream
keyed by ``(seed, agent)`` and positioned by the iteration counter, so a draw
depends only on those three integers and never on call order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RngStream",
    "ProblemInstance",
    "SingleIndexProblem",
    "HeterogeneousQuadratic",
    "generate_phase_retrieval",
    "generate_linear_regression",
    "generate_heterogeneous_quadratic",
    "parse_problem",
]

_MASK64 = (1 << 64) - 1
# domain tag separating instance construction from per-iteration sampling
_DATA_TAG = 0x5EED_DA7A


@dataclass(frozen=True)
class RngStream:
    seed: int
    agent: int
    iteration: int

    def generator(self) -> np.random.Generator:
        bitgen = np.random.Philox(
            key=[self.seed & _MASK64, self.agent & _MASK64],
            counter=[0, self.iteration & _MASK64, 0, 0],
        )
        return np.random.Generator(bitgen)


class ProblemInstance:
    """``n`` smooth components ``F_i`` on ``R^d`` with stochastic gradient oracles.

    Subclasses provide the analytic gradients and the sampling rule; this
    base class supplies index checking and the per-agent stream plumbing.
    """

    kind: str
    n: int
    d: int
    noise_std: float
    smoothness_bound: float
    heterogeneity_bound: float
    phi_star: float | None

    def _check_agent(self, agent: int) -> None:
        if not 0 <= agent < self.n:
            raise IndexError(f"agent {agent} out of range for n={self.n}")

    def initial_point(self) -> np.ndarray:
        """Common starting iterate shared by every agent."""
        return np.zeros(self.d)

    def sample_gradient(self, agent: int, x, batch: int, rng: RngStream) -> np.ndarray:
        """Mean of ``batch`` independent stochastic gradients of ``F_agent`` at ``x``."""
        self._check_agent(agent)
        if batch < 1:
            raise ValueError(f"batch must be >= 1, got {batch}")
        return self._sample(agent, np.asarray(x, dtype=float), batch, rng.generator())

    def sample_gradients(self, X: np.ndarray, seed: int, iteration: int, batch: int = 1) -> np.ndarray:
        """Stochastic gradients for all agents, column ``i`` evaluated at ``X[:, i]``.

        Agents are drawn in index order from their own streams.
        """
        out = np.empty_like(X, dtype=float)
        for i in range(self.n):
            out[:, i] = self.sample_gradient(i, X[:, i], batch, RngStream(seed, i, iteration))
        return out

    def true_gradient(self, agent: int, x) -> np.ndarray:
        self._check_agent(agent)
        return self._gradient(agent, np.asarray(x, dtype=float))

    def true_mean_gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def objective_value(self, x) -> float:
        raise NotImplementedError

    def test_loss(self, x) -> float:
        raise NotImplementedError

    def _sample(self, agent, x, batch, gen):
        raise NotImplementedError

    def _gradient(self, agent, x):
        raise NotImplementedError


@dataclass(eq=False)
class SingleIndexProblem(ProblemInstance):
    """Homogeneous single-index regression ``y = g(x^T theta*) + eps`` with squared loss.

    ``link`` is ``"square"`` (sparse phase retrieval) or ``"identity"``
    (sparse linear regression).  Features are standard Gaussian, noise is
    ``N(0, noise_std^2)``, and every agent sees the same distribution.
    """

    n: int
    d: int
    theta_star: np.ndarray
    noise_std: float
    link: str = "square"
    x_init: np.ndarray | None = None
    test_X: np.ndarray | None = field(default=None, repr=False)
    test_y: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.link not in ("square", "identity"):
            raise ValueError(f"unknown link {self.link!r}")
        self.kind = "phase" if self.link == "square" else "linreg"
        s2 = float(self.theta_star @ self.theta_star)
        # global smoothness fails for the square link; bound the Hessian over ||theta|| <= 2||theta*||
        self.smoothness_bound = 140.0 * s2 if self.link == "square" else 2.0
        self.heterogeneity_bound = 0.0
        self.phi_star = self.noise_std**2

    def initial_point(self):
        return np.zeros(self.d) if self.x_init is None else self.x_init.copy()

    def _g(self, t):
        return t * t if self.link == "square" else t

    def _loss_grad(self, feats, y, x):
        # gradient of mean (y - g(f^T x))^2 over rows of feats
        b = feats @ x
        resid = y - self._g(b)
        dg = 2.0 * b if self.link == "square" else 1.0
        return -2.0 * ((resid * dg) @ feats) / feats.shape[0]

    def _sample(self, agent, x, batch, gen):
        feats = gen.standard_normal((batch, self.d))
        y = self._g(feats @ self.theta_star) + self.noise_std * gen.standard_normal(batch)
        return self._loss_grad(feats, y, x)

    def _gradient(self, agent, x):
        return self.true_mean_gradient(x)

    def true_mean_gradient(self, x):
        x = np.asarray(x, dtype=float)
        t = self.theta_star
        if self.link == "identity":
            return 2.0 * (x - t)
        sa, sb, c = t @ t, x @ x, t @ x
        return (12.0 * sb - 4.0 * sa) * x - 8.0 * c * t

    def objective_value(self, x):
        """Population risk ``E (y - g(x^T theta))^2`` in closed form (Gaussian moments)."""
        x = np.asarray(x, dtype=float)
        t = self.theta_star
        if self.link == "identity":
            diff = x - t
            return float(diff @ diff + self.noise_std**2)
        sa, sb, c = t @ t, x @ x, t @ x
        return float(3 * sa**2 + 3 * sb**2 - 2 * sa * sb - 4 * c**2 + self.noise_std**2)

    def test_loss(self, x):
        if self.test_X is None:
            return self.objective_value(x)
        resid = self.test_y - self._g(self.test_X @ np.asarray(x, dtype=float))
        return float(np.mean(resid * resid))


@dataclass(eq=False)
class HeterogeneousQuadratic(ProblemInstance):
    """``F_i(x) = 0.5 ||x - c_i||^2`` with ``c_i = c_bar + hetero_scale * u_i``.

    The offsets satisfy ``sum_i u_i = 0`` and ``||u_i|| = 1`` (for ``n >= 2``),
    so ``grad F_i - grad F = -hetero_scale * u_i`` and the heterogeneity bound
    equals ``hetero_scale`` exactly.
    """

    n: int
    d: int
    c_bar: np.ndarray
    offsets: np.ndarray  # d x n unit columns summing to zero
    hetero_scale: float
    noise_std: float

    def __post_init__(self):
        self.kind = "quad"
        self.centers = self.c_bar[:, None] + self.hetero_scale * self.offsets
        self.smoothness_bound = 1.0
        dev = self.hetero_scale * self.offsets
        self.heterogeneity_bound = float(np.max(np.linalg.norm(dev, axis=0)))
        self.phi_star = float(0.5 * np.sum(dev * dev) / self.n)

    def _sample(self, agent, x, batch, gen):
        noise = self.noise_std * gen.standard_normal((batch, self.d))
        return x - self.centers[:, agent] + noise.mean(axis=0)

    def _gradient(self, agent, x):
        return x - self.centers[:, agent]

    def true_mean_gradient(self, x):
        return np.asarray(x, dtype=float) - self.c_bar

    def objective_value(self, x):
        diff = np.asarray(x, dtype=float)[:, None] - self.centers
        return float(0.5 * np.sum(diff * diff) / self.n)

    def test_loss(self, x):
        return self.objective_value(x)


def _sparse_truth(d, s, gen):
    if not 1 <= s <= d:
        raise ValueError(f"sparsity must satisfy 1 <= s <= d, got s={s}, d={d}")
    theta = np.zeros(d)
    support = gen.choice(d, size=s, replace=False)
    theta[support] = gen.choice([-1.0, 1.0], size=s) / np.sqrt(s)
    return theta


def _single_index(link, d, s, n, noise_std, seed, test_size):
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    gen = np.random.default_rng([_DATA_TAG, seed & _MASK64])
    theta = _sparse_truth(d, s, gen)
    x_init = None
    if link == "square":
        # theta = 0 is a critical point where every sampled gradient vanishes
        direction = gen.standard_normal(d)
        x_init = direction / np.linalg.norm(direction) * np.linalg.norm(theta)
    inst = SingleIndexProblem(n=n, d=d, theta_star=theta, noise_std=float(noise_std), link=link, x_init=x_init)
    if test_size:
        inst.test_X = gen.standard_normal((test_size, d))
        inst.test_y = inst._g(inst.test_X @ theta) + noise_std * gen.standard_normal(test_size)
    return inst


def generate_phase_retrieval(d: int = 100, sparsity: int = 5, n: int = 1, noise_std: float = 0.1,
                             seed: int = 0, test_size: int = 10_000) -> SingleIndexProblem:
    """Sparse phase retrieval: ``y = (x^T theta*)^2 + eps``.

    ``theta*`` has ``sparsity`` nonzeros equal to ``+-1/sqrt(sparsity)`` at
    uniformly drawn positions.  A held-out set of ``test_size`` samples is
    shared by every agent.
    """
    return _single_index("square", d, sparsity, n, noise_std, seed, test_size)


def generate_linear_regression(d: int = 100, sparsity: int = 5, n: int = 1, noise_std: float = 0.1,
                               seed: int = 0, test_size: int = 10_000) -> SingleIndexProblem:
    return _single_index("identity", d, sparsity, n, noise_std, seed, test_size)


def _unit_offsets(n, d, gen):
    """``n`` unit vectors summing to zero: antipodal pairs plus one 120-degree triple when ``n`` is odd."""
    U = np.zeros((d, n))
    if n == 1:
        return U

    def unit():
        v = gen.standard_normal(d)
        return v / np.linalg.norm(v)

    start = 0
    if n % 2:
        if d < 2:
            raise ValueError("odd agent counts need d >= 2 for zero-sum unit offsets")
        a = unit()
        b = gen.standard_normal(d)
        b -= (b @ a) * a
        b /= np.linalg.norm(b)
        for j, ang in enumerate((0.0, 2 * np.pi / 3, 4 * np.pi / 3)):
            U[:, j] = np.cos(ang) * a + np.sin(ang) * b
        start = 3
    for j in range(start, n, 2):
        v = unit()
        U[:, j], U[:, j + 1] = v, -v
    # the triple's column sum is zero only up to round-off; remove the residue
    U -= U.mean(axis=1, keepdims=True)
    return U


def generate_heterogeneous_quadratic(d: int, n: int, hetero_scale: float = 0.0, noise_std: float = 0.0,
                                     seed: int = 0) -> HeterogeneousQuadratic:
    if n < 1 or d < 1:
        raise ValueError("n and d must be positive")
    if hetero_scale < 0 or noise_std < 0:
        raise ValueError("hetero_scale and noise_std must be >= 0")
    gen = np.random.default_rng([_DATA_TAG, seed & _MASK64])
    c_bar = gen.standard_normal(d)
    U = _unit_offsets(n, d, gen) if hetero_scale > 0 else np.zeros((d, n))
    return HeterogeneousQuadratic(n=n, d=d, c_bar=c_bar, offsets=U, hetero_scale=float(hetero_scale),
                                  noise_std=float(noise_std))


def parse_problem(spec: str, n: int, seed: int, test_size: int = 10_000) -> ProblemInstance:
    """Build an instance from ``phase:<d>:<s>:<noise>``, ``linreg:<d>:<s>:<noise>`` or ``quad:<d>:<hetero>:<noise>``."""
    parts = spec.strip().split(":")
    kind, args = parts[0].lower(), parts[1:]
    if len(args) != 3:
        raise ValueError(f"malformed problem spec {spec!r}")
    try:
        if kind == "phase":
            return generate_phase_retrieval(int(args[0]), int(args[1]), n, float(args[2]), seed, test_size)
        if kind == "linreg":
            return generate_linear_regression(int(args[0]), int(args[1]), n, float(args[2]), seed, test_size)
        if kind == "quad":
            return generate_heterogeneous_quadratic(int(args[0]), n, float(args[1]), float(args[2]), seed)
    except ValueError as exc:
        raise ValueError(f"malformed problem spec {spec!r}: {exc}") from None
    raise ValueError(f"malformed problem spec {spec!r}")
