"""Run configuration, single runs and multi-(n, seed) sweeps.

Configurations are flat ``key = value`` text.  Every run echoes its resolved
configuration as a manifest that parses back to an identical :class:`RunConfig`.
"""

from __future__ import annotations

import argparse
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .metrics import Evaluator, final_window, write_csv
from .oracles import parse_problem
from .proximal import parse_prox
from .solvers import ALGORITHMS, DivergenceError, SolverConfig, parse_schedule, run
from .topology import auto_rounds, parse_topology, topology_agents, with_agents

__all__ = [
    "ConfigError",
    "RunConfig",
    "SweepConfig",
    "SweepSummary",
    "parse_config",
    "emit_manifest",
    "run_single",
    "run_speedup_suite",
    "parse_seeds",
]

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Bad command line or config file; the message names the offending token."""


@dataclass(frozen=True)
class RunConfig:
    topology: str
    problem: str
    algorithm: str = "dasa"
    prox: str = "zero"
    gamma: float = 1.0
    m: int = 1
    auto_m: bool = False
    chebyshev: bool = False
    schedule: str = "const"
    batch: int = 1
    K: int = 1000
    seed: int = 0
    eval_every: int = 50
    test_size: int = 10_000
    wall_clock: bool = False
    debug: bool = False
    out: str = "."

    @property
    def n(self) -> int:
        return topology_agents(self.topology)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            algorithm=self.algorithm,
            gamma=self.gamma,
            m=self.m,
            chebyshev=self.chebyshev,
            schedule=parse_schedule(self.schedule),
            batch=self.batch,
            K=self.K,
            eval_every=self.eval_every,
            check_invariants=self.debug,
        )

    def for_cell(self, n: int, seed: int) -> "RunConfig":
        """Copy with a new agent count and seed, re-resolving automatic rounds."""
        cfg = replace(self, topology=with_agents(self.topology, n), seed=seed)
        return _resolve_m(cfg) if cfg.auto_m else cfg


_BOOL_KEYS = {f.name for f in fields(RunConfig) if f.type in ("bool", bool)}
_KEYS = [f.name for f in fields(RunConfig)]
_REQUIRED = ("topology", "problem")


def _to_bool(key, text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _resolve_m(cfg: RunConfig) -> RunConfig:
    W = parse_topology(cfg.topology)
    return replace(cfg, m=auto_rounds(W.rho, cfg.chebyshev), auto_m=True)


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        if key not in _KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value.strip()
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _run_parser(prog="decprox run") -> _Parser:
    p = _Parser(prog=prog, add_help=True, allow_abbrev=False)
    p.add_argument("--config", help="key = value file; command-line flags must not contradict it")
    p.add_argument("--algorithm")
    p.add_argument("--topology")
    p.add_argument("--problem")
    p.add_argument("--prox")
    p.add_argument("--gamma")
    p.add_argument("--m")
    p.add_argument("--chebyshev", action="store_const", const="true")
    p.add_argument("--schedule")
    p.add_argument("--batch")
    p.add_argument("--K")
    p.add_argument("--seed")
    p.add_argument("--eval-every", dest="eval_every")
    p.add_argument("--test-size", dest="test_size")
    p.add_argument("--wall-clock", dest="wall_clock", action="store_const", const="true")
    p.add_argument("--debug", action="store_const", const="true")
    p.add_argument("--out")
    return p


def _build(values: dict[str, str]) -> RunConfig:
    for key in _REQUIRED:
        if key not in values:
            raise ConfigError(f"missing required --{key}")
    kwargs = {}
    converters = {"gamma": float, "batch": int, "K": int, "seed": int, "eval_every": int, "test_size": int}
    for key, text in values.items():
        if key in ("m", "auto_m"):
            continue
        try:
            if key in _BOOL_KEYS:
                kwargs[key] = _to_bool(key, text)
            elif key in converters:
                kwargs[key] = converters[key](text)
            else:
                kwargs[key] = str(text)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {text!r}") from None

    m_text = values.get("m", "1")
    auto = m_text == "auto" or _to_bool("auto_m", values.get("auto_m", "false"))
    if not auto:
        try:
            kwargs["m"] = int(m_text)
        except ValueError:
            raise ConfigError(f"m: expected an integer or 'auto', got {m_text!r}") from None
    try:
        cfg = RunConfig(**kwargs)
        if cfg.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm: expected one of {ALGORITHMS}, got {cfg.algorithm!r}")
        W = parse_topology(cfg.topology)
        parse_prox(cfg.prox)
        parse_schedule(cfg.schedule)
        if cfg.problem.split(":")[0] not in ("phase", "linreg", "quad") or len(cfg.problem.split(":")) != 4:
            raise ConfigError(f"malformed problem spec {cfg.problem!r}")
        if auto:
            cfg = replace(cfg, m=auto_rounds(W.rho, cfg.chebyshev), auto_m=True)
        cfg.solver_config()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.K < 0:
        raise ConfigError(f"K: must be >= 0, got {cfg.K}")
    return cfg


def _collect(ns: argparse.Namespace) -> dict[str, str]:
    cli = {k: v for k, v in vars(ns).items() if v is not None and k in _KEYS}
    values: dict[str, str] = {}
    if ns.config:
        values = read_config_file(ns.config)
        for key, value in cli.items():
            if key in values and values[key] != value:
                raise ConfigError(f"--{key.replace('_', '-')} {value} conflicts with {key} = {values[key]} in {ns.config}")
    values.update(cli)
    return values


def parse_config(argv) -> RunConfig:
    """Resolve a :class:`RunConfig` from ``decprox run`` flags and an optional config file."""
    ns = _run_parser().parse_args(list(argv))
    return _build(_collect(ns))


def emit_manifest(cfg: RunConfig) -> str:
    lines = ["# decprox resolved run configuration"]
    for key, value in asdict(cfg).items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = repr(value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def _paths(cfg: RunConfig) -> tuple[Path, Path]:
    out = Path(cfg.out)
    return out / f"metrics_{cfg.n}_{cfg.seed}.csv", out / f"manifest_{cfg.n}_{cfg.seed}.txt"


def run_single(cfg: RunConfig) -> Path:
    """Execute one run and write its metrics CSV and manifest.

    On divergence the partial CSV is kept and :class:`DivergenceError` is re-raised.
    """
    W = parse_topology(cfg.topology)
    instance = parse_problem(cfg.problem, W.n, cfg.seed, cfg.test_size)
    prox_op = parse_prox(cfg.prox)
    solver = cfg.solver_config()
    evaluator = Evaluator(instance, prox_op, cfg.gamma, W, check_invariants=cfg.debug)
    csv_path, manifest_path = _paths(cfg)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(emit_manifest(cfg))
    try:
        run(solver, W, instance, prox_op, cfg.seed, evaluator, timing=cfg.wall_clock)
    finally:
        write_csv(csv_path, evaluator.records)
    return csv_path


@dataclass(frozen=True)
class SweepConfig:
    base: RunConfig
    agents: tuple[int, ...]
    seeds: tuple[int, ...]
    parallel: bool = False

    def __post_init__(self):
        if not self.agents or not self.seeds:
            raise ConfigError("sweep needs at least one agent count and one seed")


@dataclass
class CellResult:
    n: int
    seed: int
    ok: bool
    stationarity: float = math.nan
    test_loss: float = math.nan
    consensus_x: float = math.nan
    dual_gap: float = math.nan
    error: str = ""


@dataclass
class SweepSummary:
    cells: list[CellResult] = field(default_factory=list)
    rows: list[dict] = field(default_factory=list)

    def by_n(self, n: int) -> list[CellResult]:
        return [c for c in self.cells if c.n == n]


SUMMARY_FIELDS = ("n", "runs_ok", "runs_failed", "stationarity", "test_loss", "consensus_x", "dual_gap")


def _run_cell(cfg: RunConfig) -> CellResult:
    from .metrics import read_csv

    try:
        path = run_single(cfg)
    except (DivergenceError, ArithmeticError, AssertionError, OSError) as exc:
        log.warning("cell n=%d seed=%d failed: %s", cfg.n, cfg.seed, exc)
        return CellResult(cfg.n, cfg.seed, ok=False, error=str(exc))
    rows = read_csv(path)
    return CellResult(
        cfg.n,
        cfg.seed,
        ok=True,
        stationarity=final_window([r["stationarity"] for r in rows]),
        test_loss=final_window([r["test_loss"] for r in rows]),
        consensus_x=final_window([r["consensus_x"] for r in rows]),
        dual_gap=final_window([r["dual_gap"] for r in rows]),
    )


def run_speedup_suite(sweep: SweepConfig) -> SweepSummary:
    """Run every ``(n, seed)`` cell with ``alpha_k = sqrt(n / K)`` and summarize per ``n``.

    Each summary value is the final-window (last 10% of evaluations) mean,
    averaged over the seeds that completed.  Failed cells are counted and
    skipped.
    """
    base = replace(sweep.base, schedule="const")
    cells_cfg = [base.for_cell(n, s) for n in sweep.agents for s in sweep.seeds]
    if sweep.parallel:
        with ProcessPoolExecutor() as pool:
            cells = list(pool.map(_run_cell, cells_cfg))
    else:
        cells = [_run_cell(c) for c in cells_cfg]
    summary = SweepSummary(cells=cells)
    for n in sweep.agents:
        mine = [c for c in cells if c.n == n]
        ok = [c for c in mine if c.ok]
        row = {"n": n, "runs_ok": len(ok), "runs_failed": len(mine) - len(ok)}
        for key in SUMMARY_FIELDS[3:]:
            row[key] = sum(getattr(c, key) for c in ok) / len(ok) if ok else math.nan
        summary.rows.append(row)
    out = Path(base.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w") as fh:
        fh.write(",".join(SUMMARY_FIELDS) + "\n")
        for row in summary.rows:
            fh.write(",".join(
                str(row[k]) if isinstance(row[k], int) else format(row[k], ".17g") for k in SUMMARY_FIELDS
            ) + "\n")
    return summary


def parse_seeds(text: str) -> tuple[int, ...]:
    """``0..9`` (inclusive) or ``1,5,7``."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            seeds = tuple(range(int(lo), int(hi) + 1))
        else:
            seeds = tuple(int(s) for s in text.split(","))
    except ValueError:
        raise ConfigError(f"--seeds: cannot parse {text!r}") from None
    if not seeds:
        raise ConfigError(f"--seeds: empty range {text!r}")
    return seeds


def parse_agents(text: str) -> tuple[int, ...]:
    try:
        agents = tuple(int(a) for a in text.split(","))
    except ValueError:
        raise ConfigError(f"--agents: cannot parse {text!r}") from None
    if any(a < 1 for a in agents):
        raise ConfigError(f"--agents: counts must be positive, got {text!r}")
    return agents


def parse_sweep(argv) -> SweepConfig:
    p = _run_parser("decprox sweep")
    p.add_argument("--agents", required=True)
    p.add_argument("--seeds", default="0")
    p.add_argument("--parallel", action="store_true")
    ns = p.parse_args(list(argv))
    values = _collect(ns)
    base = _build(values)
    return SweepConfig(base=base, agents=parse_agents(ns.agents), seeds=parse_seeds(ns.seeds), parallel=ns.parallel)
