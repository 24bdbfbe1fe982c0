"""Independent reference routines shared by the unit and acceptance tests."""

import numpy as np

from decprox.oracles import RngStream


def draw_many(inst, agent, x, count, seed=12345, batch=1):
    """``count`` stochastic gradients from consecutive stream iterations, one per row."""
    return np.stack([inst.sample_gradient(agent, x, batch, RngStream(seed, agent, it)) for it in range(count)])


def unbiased_within_4_sigma(inst, agent, x, count=100_000, seed=12345):
    draws = draw_many(inst, agent, x, count, seed)
    mean = draws.mean(axis=0)
    sd = draws.std(axis=0, ddof=1)
    truth = inst.true_gradient(agent, x)
    slack = 4 * sd / np.sqrt(count) + 1e-12
    return bool(np.all(np.abs(mean - truth) <= slack)), draws


def central_difference(f, x, h=1e-5):
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def scalar_reference(x0, c, gamma, alpha, K, prox=lambda v, g: v):
    """Centralized averaged prox recursion with exact gradients of 0.5 ||x - c||^2."""
    x, z = np.array(x0, dtype=float), np.zeros_like(x0, dtype=float)
    out = [x.copy()]
    for _ in range(K):
        y = prox(x - gamma * z, gamma)
        x, z = (1 - alpha) * x + alpha * y, (1 - alpha) * z + alpha * (x - c)
        out.append(x.copy())
    return np.array(out)
