"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are printed
even without ``-s``.
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np
import pytest

from decprox.harness import RunConfig, SweepConfig, run_single, run_speedup_suite
from decprox.metrics import Evaluator, consensus_error, final_window
from decprox.oracles import (
    HeterogeneousQuadratic,
    RngStream,
    generate_heterogeneous_quadratic,
    generate_linear_regression,
    generate_phase_retrieval,
)
from decprox.proximal import L1, BoxIndicator, L2Ball, Zero, eta, gradient_mapping, prox
from decprox.solvers import ConstantSqrtNK, Fixed, SolverConfig, run
from decprox.topology import (
    auto_rounds,
    build_complete,
    build_random_connected,
    build_ring,
    chebyshev_mix,
    mix,
)
from helpers import unbiased_within_4_sigma

pytestmark = pytest.mark.slow

RING = 1 / 3


def verdict(capsys, number, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")


def deviation_norm(A):
    return np.linalg.norm(A - A.mean(axis=1, keepdims=True))


# 1. invariant suite --------------------------------------------------------------

def _mixing_ok():
    mats = [build_ring(n, RING) for n in (1, 2, 4, 8, 16)] + [build_complete(6), build_random_connected(10, 0.3, 1)]
    for M in mats:
        W = M.weights
        if not (np.array_equal(W, W.T) and np.all(W >= 0) and 0 <= M.rho < 1
                and np.allclose(W.sum(0), 1, atol=1e-12, rtol=0)):
            return False
    return True


OPS = [Zero(), L1(0.3), BoxIndicator(-0.5, 1.0), L2Ball(1.5)]


def _prox_ok(rng):
    for op in OPS:
        for _ in range(1000):
            x, y = rng.standard_normal((2, 6)) * 3
            g = rng.uniform(0.01, 5)
            if np.linalg.norm(op.prox(x, g) - op.prox(y, g)) > np.linalg.norm(x - y) + 1e-12:
                return False
    return True


def _mapping_ok(rng):
    for _ in range(200):
        x, z = rng.standard_normal((2, 5))
        g = rng.uniform(0.01, 10)
        if not np.allclose(gradient_mapping(x, z, g, Zero()), z, rtol=1e-12, atol=1e-12):
            return False
    return not np.any(gradient_mapping(np.zeros(3), np.zeros(3), 1.0, L1(0.4)))


def _eta_gap_ok(rng):
    for op in OPS:
        for _ in range(300):
            x = op.prox(rng.standard_normal(4) * 2, 1.0)
            z = rng.standard_normal(4) * 2
            g = rng.uniform(0.01, 5)
            G = gradient_mapping(x, z, g, op)
            if op.value(x) - eta(x, z, g, op) < g / 2 * G @ G - 1e-10:
                return False
    return True


def _unbiased_ok():
    checks = [
        (generate_heterogeneous_quadratic(4, 3, 1.0, 0.7, 0), np.array([0.5, -1.0, 2.0, 0.0])),
        (generate_linear_regression(8, 2, 2, 0.3, 1, test_size=0), np.linspace(-1, 1, 8)),
        (generate_phase_retrieval(20, 3, 2, 0.1, 2, test_size=0), np.linspace(-0.3, 0.3, 20)),
    ]
    return all(unbiased_within_4_sigma(inst, inst.n - 1, x, count=100_000)[0] for inst, x in checks)


def _runtime_invariants_ok():
    # debug mode raises on a violated mean-evolution identity, a drifted
    # tracked mean (every round) or a violated Y-consensus bound (every evaluation)
    inst = generate_heterogeneous_quadratic(6, 8, 3.0, 1.0, 4)
    W = build_ring(8, RING)
    for alg, chebyshev in (("dasa-gt", False), ("dasa-gt", True), ("dasa", False)):
        cfg = SolverConfig(alg, 1.0, 3, chebyshev, ConstantSqrtNK(), 1, 1000, 1, check_invariants=True)
        ev = Evaluator(inst, L1(0.05), 1.0, W, pairwise=False, check_invariants=True)
        run(cfg, W, inst, L1(0.05), 11, ev)
        if len(ev.records) != 1001:
            return False
    return True


def test_criterion_1_invariant_suite(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    parts = {
        "mixing": _mixing_ok(),
        "prox-nonexpansive": _prox_ok(rng),
        "mapping-reductions": _mapping_ok(rng),
        "eta-gap": _eta_gap_ok(rng),
        "unbiased-1e5": _unbiased_ok(),
        "runtime-invariants": _runtime_invariants_ok(),
    }
    elapsed = time.perf_counter() - t0
    ok = all(parts.values()) and elapsed < 120
    failed = [k for k, v in parts.items() if not v]
    verdict(capsys, 1, ok, f"{len(parts) - len(failed)}/{len(parts)} groups green {failed or ''} in {elapsed:.1f}s")
    assert ok


# 2. Chebyshev contraction --------------------------------------------------------

def test_criterion_2_chebyshev_contraction(capsys):
    rng = np.random.default_rng(7)
    violations = checks = 0
    for n in (4, 16):
        W = build_ring(n, RING)
        beta = 1 - math.sqrt(1 - W.rho)
        for _ in range(100):
            A = rng.standard_normal((5, n))
            base = deviation_norm(A)
            for m in range(1, 11):
                checks += 2
                slack = 1e-12 * (1 + base)
                violations += deviation_norm(chebyshev_mix(A, W, m)) > 2 * beta**m * base + slack
                violations += deviation_norm(mix(A, W, m)) > W.rho**m * base + slack
    verdict(capsys, 2, violations == 0, f"{violations} violations in {checks} checks")
    assert violations == 0


# 3. centralized reduction -------------------------------------------------------

def centralized_reference(inst, prox_op, gamma, K, seed):
    """Exact-arithmetic mean recursion, drawing the same per-agent samples."""
    n = inst.n
    x = inst.initial_point().astype(float)
    z = np.zeros_like(x)
    out = [x.copy()]
    alpha = math.sqrt(n / K)
    for k in range(K):
        y = prox(prox_op, gamma, x - gamma * z)
        v = np.mean([inst.sample_gradient(i, x, 1, RngStream(seed, i, k + 1)) for i in range(n)], axis=0)
        x = (1 - alpha) * x + alpha * y
        z = (1 - alpha) * z + alpha * v
        out.append(x.copy())
    return np.array(out)


def test_criterion_3_centralized_reduction(capsys):
    K, seed, op = 500, 5, L1(0.05)
    worst = 0.0
    for W in (build_ring(1, RING), build_complete(8)):
        inst = HeterogeneousQuadratic(n=W.n, d=6, c_bar=np.linspace(-2, 2, 6), offsets=np.zeros((6, W.n)),
                                      hetero_scale=0.0, noise_std=1.0)
        ref = centralized_reference(inst, op, 0.5, K, seed)
        for alg in ("dasa", "dasa-gt"):
            traj = []
            run(SolverConfig(alg, 0.5, 1, False, ConstantSqrtNK(), 1, K, K), W, inst, op, seed, trajectory=traj)
            worst = max(worst, float(np.max(np.abs(np.array(traj) - ref))))
    ok = worst <= 1e-12
    verdict(capsys, 3, ok, f"max |xbar - reference| = {worst:.2e} over {K} iterations (n = 1, 8)")
    assert ok


# 4. linear speedup on phase retrieval -------------------------------------------

def test_criterion_4_linear_speedup(tmp_path, capsys):
    base = RunConfig(topology=f"ring:16:{RING!r}", problem="phase:100:5:0.1", prox="l1:0.01", gamma=0.01,
                     auto_m=True, schedule="const", batch=1, K=10_000, eval_every=50, out=str(tmp_path))
    agents, seeds = (1, 4, 16), tuple(range(10))
    t0 = time.perf_counter()
    summary = run_speedup_suite(SweepConfig(base, agents, seeds, parallel=True))
    elapsed = time.perf_counter() - t0
    means = [row["stationarity"] for row in summary.rows]
    per_seed = {n: {c.seed: c.stationarity for c in summary.by_n(n)} for n in agents}
    ordered = sum(per_seed[1][s] > per_seed[4][s] > per_seed[16][s] for s in seeds)
    failed = sum(row["runs_failed"] for row in summary.rows)
    ok = failed == 0 and means[0] > means[1] > means[2] and ordered >= 8
    verdict(capsys, 4, ok, "mean stationarity " + " > ".join(f"{m:.4g}" for m in means)
            + f"; ordered seeds {ordered}/10; {elapsed:.0f}s")
    assert ok


# 5 and 7. rate scaling and dual convergence -------------------------------------

RATE_D, RATE_N, RATE_PROX = 10, 8, L1(0.01)


def _rate_cell(args):
    K, seed = args
    W = build_ring(RATE_N, RING)
    inst = generate_heterogeneous_quadratic(RATE_D, RATE_N, 0.0, 1.0, seed)
    ev = Evaluator(inst, RATE_PROX, 1.0, W, pairwise=False)
    cfg = SolverConfig("dasa", 1.0, auto_rounds(W.rho), False, ConstantSqrtNK(), 1, K, 10)
    run(cfg, W, inst, RATE_PROX, seed, ev)
    L = inst.smoothness_bound
    consensus = L * L * ev.column("consensus_x") + ev.column("consensus_z")
    return {
        "stationarity": final_window(ev.column("stationarity")),
        "consensus": final_window(consensus),
        "dual_first": ev.records[0].dual_gap,
        "dual_final": final_window(ev.column("dual_gap")),
    }


@pytest.fixture(scope="module")
def rate_runs():
    cells = [(K, s) for K in (2000, 8000) for s in range(10)]
    with ProcessPoolExecutor() as pool:
        out = list(pool.map(_rate_cell, cells))
    return {cell: res for cell, res in zip(cells, out)}


def _seed_mean(runs, K, key):
    return float(np.mean([runs[(K, s)][key] for s in range(10)]))


def test_criterion_5_rate_scaling(rate_runs, capsys):
    stat = _seed_mean(rate_runs, 2000, "stationarity") / _seed_mean(rate_runs, 8000, "stationarity")
    cons = _seed_mean(rate_runs, 2000, "consensus") / _seed_mean(rate_runs, 8000, "consensus")
    ok = 1.4 <= stat <= 3.0 and 2.5 <= cons <= 6.5
    verdict(capsys, 5, ok, f"stationarity ratio {stat:.3f} (want [1.4, 3.0]); consensus ratio {cons:.3f} (want [2.5, 6.5])")
    assert ok


def test_criterion_7_dual_convergence(rate_runs, capsys):
    ratios = {K: _seed_mean(rate_runs, K, "dual_first") / _seed_mean(rate_runs, K, "dual_final") for K in (2000, 8000)}
    ok = all(r >= 100 for r in ratios.values())
    verdict(capsys, 7, ok, "initial / final-window dual gap " + ", ".join(f"K={K}: {r:.0f}x" for K, r in ratios.items()))
    assert ok


# 6. heterogeneity contrast ------------------------------------------------------

def test_criterion_6_heterogeneity_contrast(capsys):
    W = build_ring(8, RING)
    inst = generate_heterogeneous_quadratic(10, 8, 5.0, 0.0, 0)
    final = {}
    for alg in ("dasa", "dasa-gt"):
        ev = Evaluator(inst, Zero(), 1.0, W, pairwise=False)
        run(SolverConfig(alg, 1.0, auto_rounds(W.rho), False, Fixed(0.05), 1, 5000, 50), W, inst, Zero(), 0, ev)
        final[alg] = ev.records[-1]
    gt, plain = final["dasa-gt"], final["dasa"]
    gt_ok = gt.dual_gap <= 1e-8 and gt.stationarity <= 1e-8
    contrast = plain.dual_gap / max(gt.dual_gap, np.finfo(float).tiny)
    ok = gt_ok and plain.dual_gap >= 10 * gt.dual_gap
    verdict(capsys, 6, ok, f"GT dual {gt.dual_gap:.2e} stationarity {gt.stationarity:.2e}; "
            f"plain dual {plain.dual_gap:.2e} (ratio {contrast:.2g}, want >= 10); "
            f"consensus_x plain {plain.consensus_x:.2e} vs GT {gt.consensus_x:.2e}")
    assert ok


# 8. determinism ------------------------------------------------------------------

def test_criterion_8_determinism(tmp_path, capsys):
    configs = [
        RunConfig("ring:6", "phase:30:3:0.1", algorithm="dasa-gt", prox="l1:0.01", gamma=0.05, m=2,
                  K=300, eval_every=10, test_size=500, seed=3),
        RunConfig("random:7:0.5:2", "quad:5:2.0:1.0", algorithm="dasa", prox="box:-1:1", chebyshev=True,
                  m=3, schedule="dim:0.5", batch=4, K=300, eval_every=7, seed=9),
    ]
    same = []
    for i, cfg in enumerate(configs):
        a = run_single(replace(cfg, out=str(tmp_path / f"{i}a")))
        b = run_single(replace(cfg, out=str(tmp_path / f"{i}b")))
        same.append(a.read_bytes() == b.read_bytes())
    ok = all(same)
    verdict(capsys, 8, ok, f"{sum(same)}/{len(same)} repeated runs byte-identical")
    assert ok
