"""Experiment plans, sweep orchestration and result files.

Plan files are flat ``key = value`` text (``#`` starts a comment).  Grid axes
accept comma-separated lists; the grid is their Cartesian product in the order
n, k-or-alpha, dynamics, beta.  Recognised keys::

    schema_version = 1              # required
    name           = separation
    n              = 256, 512
    alpha          = 0.75           # k = floor(n ** alpha); or give k = ...
    dynamics       = metropolis, greedy, simulated_tempering, birth_death_1d, birth_death_2d
    beta           = 0, ln(n), 2*ln(n)
    hamiltonian    = identity       # or h_0, h_1, ..., h_n for a single n
    epsilon        = 0.15           # size target ceil((1+eps) log2 n); "none" disables
    gamma          = 0.4            # overlap target ceil(gamma log2 n); "none" disables
    eta            = 0.5
    max_steps      = 10000000
    trials         = 20
    master_seed    = 1
    ladder_betas   = 0, 0.5*ln(n), ln(n)      # simulated tempering / 2D walk
    ladder_log_z   = first_moment             # or exact (n <= 64) or explicit values
    level_move_prob = 0.5
    baseline       = top_k_degrees  # adds the degree heuristic's overlap per trial
    workers        = 1

Seeds: trial (cell c, trial t) uses ``trial_seed = derive_seed(master, c, t)``;
its graph is ``generate(n, k, trial_seed)`` and its chain generator is seeded
with ``derive_seed(trial_seed, 1)``.  ``derive_seed`` draws one uint64 from
``numpy.random.SeedSequence(entropy=keys[0], spawn_key=keys[1:])``.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
import os
import re
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from . import analytics, chains, exact, graph_model
from .errors import InvalidParameterError
from .hamiltonian import GibbsWeightContext, HamiltonianSpec, TemperingLadder, custom_hamiltonian, identity_hamiltonian

SCHEMA_VERSION = 1
WORKERS_ENV = "CLIQUEMC_WORKERS"

TRIAL_COLUMNS = [
    "cell", "trial", "n", "k", "dynamics", "beta", "size_target", "overlap_target", "max_steps",
    "seed", "config_hash", "first_hit_size", "first_hit_overlap", "steps_run", "final_size",
    "final_overlap", "removals", "topk_overlap",
]
CELL_COLUMNS = [
    "cell", "n", "k", "dynamics", "beta", "size_target", "overlap_target", "max_steps", "trials",
    "config_hash", "hit_fraction_size", "hit_fraction_overlap", "median_hit_size", "median_hit_overlap",
    "censored_size", "censored_overlap", "mean_final_size", "mean_topk_overlap",
]

STANDARD_PLANS = {
    "separation": """\
schema_version = 1
name = separation
n = 512
alpha = 0.75
dynamics = metropolis
beta = 0, ln(n)
hamiltonian = identity
epsilon = none
gamma = 0.4
max_steps = 10000000
trials = 20
master_seed = 2024
baseline = top_k_degrees
""",
}

_GRID_KEYS = {"n", "k", "alpha", "dynamics", "beta"}
_KNOWN_KEYS = _GRID_KEYS | {
    "schema_version", "name", "hamiltonian", "epsilon", "gamma", "eta", "max_steps", "trials",
    "master_seed", "ladder_betas", "ladder_log_z", "level_move_prob", "baseline", "workers", "thin",
}


def derive_seed(*keys: int) -> int:
    """64-bit seed from integer keys (first key is the entropy, the rest the spawn key)."""
    if not keys:
        raise InvalidParameterError("derive_seed needs at least one key")
    ss = np.random.SeedSequence(entropy=int(keys[0]), spawn_key=tuple(int(k) for k in keys[1:]))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def parse_kv(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; duplicate keys are an error."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidParameterError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_-]*", key):
            raise InvalidParameterError(f"line {lineno}: bad key {key!r}")
        key = key.replace("-", "_")
        if key in out:
            raise InvalidParameterError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


_BETA_RE = re.compile(r"^(?:([0-9.eE+-]+)\s*\*?\s*)?ln\(n\)$")


def parse_beta(expr: str, n: int) -> float:
    """A number, ``inf``, or ``c*ln(n)`` / ``ln(n)`` evaluated at ``n``."""
    e = expr.strip().replace(" ", "")
    if e.lower() in ("inf", "+inf"):
        return math.inf
    m = _BETA_RE.match(e)
    if m:
        c = float(m.group(1)) if m.group(1) else 1.0
        return c * math.log(n)
    try:
        return float(e)
    except ValueError:
        raise InvalidParameterError(f"cannot parse beta {expr!r}") from None


def _split(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _opt_float(value: str | None) -> float | None:
    if value is None or value.strip().lower() in ("none", ""):
        return None
    return float(value)


@dataclass
class ExperimentPlan:
    name: str = "sweep"
    ns: list[int] = field(default_factory=lambda: [64])
    ks: list[int] | None = None
    alphas: list[float] | None = None
    dynamics: list[str] = field(default_factory=lambda: ["metropolis"])
    betas: list[str] = field(default_factory=lambda: ["0"])
    hamiltonian: str = "identity"
    epsilon: float | None = None
    gamma: float | None = None
    eta: float = 0.5
    max_steps: int = 10_000
    trials: int = 1
    master_seed: int = 0
    ladder_betas: list[str] | None = None
    ladder_log_z: str = "first_moment"
    level_move_prob: float = 0.5
    baseline: bool = False
    workers: int = 1
    thin: int | None = None

    def __post_init__(self):
        if self.ks is None and self.alphas is None:
            raise InvalidParameterError("plan needs k or alpha")
        if self.ks is not None and self.alphas is not None:
            raise InvalidParameterError("give k or alpha, not both")
        if self.trials < 0 or self.max_steps < 0:
            raise InvalidParameterError("trials and max_steps must be >= 0")
        if any(n < 1 for n in self.ns):
            raise InvalidParameterError("n must be >= 1")
        if self.alphas is not None and not all(0 < a < 1 for a in self.alphas):
            raise InvalidParameterError("alpha must lie in (0, 1)")
        bad = [d for d in self.dynamics if d not in {x.value for x in chains.Dynamics}]
        if bad:
            raise InvalidParameterError(f"unknown dynamics {bad}")
        if not 0 < self.eta < 1:
            raise InvalidParameterError("eta must lie in (0, 1)")
        if self.workers < 1:
            raise InvalidParameterError("workers must be >= 1")

    @classmethod
    def from_text(cls, text: str) -> "ExperimentPlan":
        kv = parse_kv(text)
        unknown = set(kv) - _KNOWN_KEYS
        if unknown:
            raise InvalidParameterError(f"unknown plan keys: {sorted(unknown)}")
        version = kv.get("schema_version")
        if version is None:
            raise InvalidParameterError("plan is missing schema_version")
        if int(version) != SCHEMA_VERSION:
            raise InvalidParameterError(f"unsupported schema_version {version}; expected {SCHEMA_VERSION}")
        try:
            return cls(
                name=kv.get("name", "sweep"),
                ns=[int(x) for x in _split(kv.get("n", "64"))],
                ks=[int(x) for x in _split(kv["k"])] if "k" in kv else None,
                alphas=[float(x) for x in _split(kv["alpha"])] if "alpha" in kv else None,
                dynamics=_split(kv.get("dynamics", "metropolis")),
                betas=_split(kv.get("beta", "0")),
                hamiltonian=kv.get("hamiltonian", "identity"),
                epsilon=_opt_float(kv.get("epsilon")),
                gamma=_opt_float(kv.get("gamma")),
                eta=float(kv.get("eta", 0.5)),
                max_steps=int(float(kv.get("max_steps", 10_000))),
                trials=int(kv.get("trials", 1)),
                master_seed=int(kv.get("master_seed", 0)),
                ladder_betas=_split(kv["ladder_betas"]) if "ladder_betas" in kv else None,
                ladder_log_z=kv.get("ladder_log_z", "first_moment"),
                level_move_prob=float(kv.get("level_move_prob", 0.5)),
                baseline=kv.get("baseline", "none").strip().lower() == "top_k_degrees",
                workers=int(kv.get("workers", 1)),
                thin=int(kv["thin"]) if "thin" in kv else None,
            )
        except (ValueError, KeyError) as exc:
            raise InvalidParameterError(f"bad plan value: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentPlan":
        return cls.from_text(Path(path).read_text())

    def cells(self) -> list[dict]:
        """Expand the grid; each cell is a JSON-able dict fully describing its trials."""
        out = []
        size_axis = self.ks if self.ks is not None else self.alphas
        for n, kk, dyn, beta in itertools.product(self.ns, size_axis, self.dynamics, self.betas):
            k = int(kk) if self.ks is not None else int(math.floor(n**kk + 1e-9))
            if not 0 <= k <= n:
                raise InvalidParameterError(f"k={k} outside [0, {n}]")
            size_t, over_t = chains.stop_targets(n, self.epsilon, self.gamma)
            cell = {
                "n": n,
                "k": k,
                "alpha": None if self.alphas is None else kk,
                "dynamics": dyn,
                "beta_expr": beta,
                "beta": parse_beta(beta, n),
                "hamiltonian": self.hamiltonian,
                "eta": self.eta,
                "size_target": size_t,
                "overlap_target": over_t,
                "max_steps": self.max_steps,
                "thin": self.thin,
                "baseline": self.baseline,
                "level_move_prob": self.level_move_prob,
                "ladder_betas": None,
                "ladder_log_z": self.ladder_log_z,
            }
            if dyn in ("simulated_tempering", "birth_death_2d"):
                if not self.ladder_betas:
                    raise InvalidParameterError(f"{dyn} needs ladder_betas")
                cell["ladder_betas"] = [parse_beta(b, n) for b in self.ladder_betas]
            cell["config_hash"] = config_hash(cell)
            out.append(cell)
        for i, c in enumerate(out):
            c["cell"] = i
        return out


def config_hash(cell: dict) -> str:
    payload = json.dumps({k: v for k, v in cell.items() if k not in ("cell", "config_hash")}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def build_hamiltonian(spec: str, n: int) -> HamiltonianSpec:
    if spec.strip().lower() == "identity":
        return identity_hamiltonian(n)
    vals = [float(x) for x in _split(spec)]
    return custom_hamiltonian(vals, n)


def first_moment_log_z(n: int, k: int, beta: float, h: HamiltonianSpec) -> float:
    """log E[Z(beta)] = log sum_{q,r} E[W_{q,r}] exp(beta h_q) under the planted model."""
    terms = []
    for q in range(n + 1):
        lw = beta * h.values[q]
        for r in range(min(q, k) + 1):
            terms.append(analytics.expected_census(n, k, q, r) + lw)
    return float(logsumexp(terms))


def build_ladder(cell: dict, h: HamiltonianSpec, g: graph_model.PlantedGraph | None) -> TemperingLadder:
    betas = cell["ladder_betas"]
    mode = cell["ladder_log_z"]
    n, k = cell["n"], cell["k"]
    if mode == "exact":
        if g is None:
            raise InvalidParameterError("exact ladder estimates need a graph")
        idx = exact.enumerate_cliques(g)
        logz = [exact.partition_functions(idx, GibbsWeightContext(b, h)).log_z for b in betas]
    elif mode == "first_moment":
        logz = [first_moment_log_z(n, k, b, h) for b in betas]
    else:
        logz = [float(x) for x in _split(mode)]
    return TemperingLadder(betas, logz, h, cell["level_move_prob"])


def run_trial(cell: dict, trial: int, master_seed: int) -> dict:
    """Run one (cell, trial) pair; pure function of its arguments."""
    n, k = cell["n"], cell["k"]
    seed = derive_seed(master_seed, cell["cell"], trial)
    chain_seed = derive_seed(seed, 1)
    h = build_hamiltonian(cell["hamiltonian"], n)
    dyn = chains.Dynamics(cell["dynamics"])
    beta = cell["beta"]
    if dyn is chains.Dynamics.METROPOLIS and math.isinf(beta):
        dyn = chains.Dynamics.GREEDY
    row = {
        "cell": cell["cell"], "trial": trial, "n": n, "k": k, "dynamics": dyn.value,
        "beta": beta, "size_target": cell["size_target"], "overlap_target": cell["overlap_target"],
        "max_steps": cell["max_steps"], "seed": seed, "config_hash": cell["config_hash"],
        "first_hit_size": None, "first_hit_overlap": None, "steps_run": 0, "final_size": None,
        "final_overlap": None, "removals": None, "topk_overlap": None,
    }
    common = dict(
        eta=cell["eta"], max_steps=cell["max_steps"], size_target=cell["size_target"],
        overlap_target=cell["overlap_target"], seed=chain_seed, thin=cell["thin"] or cell["max_steps"] or 1,
    )
    if dyn in (chains.Dynamics.BIRTH_DEATH_1D, chains.Dynamics.BIRTH_DEATH_2D):
        common["overlap_target"] = None
        if dyn is chains.Dynamics.BIRTH_DEATH_1D:
            cfg = chains.ChainConfig(dynamics=dyn, beta=beta, **common)
            rec = chains.run_birth_death_1d(n, GibbsWeightContext(beta, h), cell["eta"], 0, cfg)
            row["final_size"] = rec.final_state
        else:
            g = graph_model.generate(n, k, seed) if cell["ladder_log_z"] == "exact" else None
            ladder = build_ladder(cell, h, g)
            cfg = chains.ChainConfig(dynamics=dyn, ladder=ladder, **common)
            rec = chains.run_birth_death_2d(n, ladder.m, ladder, cell["eta"], (0, 0), cfg)
            row["final_size"] = rec.final_state[0]
        row["first_hit_size"] = rec.first_hit_size
        row["steps_run"] = rec.steps_run
        return row

    g = graph_model.generate(n, k, seed)
    start = chains.CliqueState.empty(g)
    if dyn is chains.Dynamics.GREEDY:
        cfg = chains.ChainConfig(dynamics=dyn, **common)
        rec = chains.run_greedy(g, start, cfg)
        final = rec.final_state
    elif dyn is chains.Dynamics.METROPOLIS:
        cfg = chains.ChainConfig(dynamics=dyn, beta=beta, **common)
        rec = chains.run_metropolis(g, GibbsWeightContext(beta, h), start, cfg)
        final = rec.final_state
    else:
        ladder = build_ladder(cell, h, g)
        cfg = chains.ChainConfig(dynamics=dyn, ladder=ladder, **common)
        rec = chains.run_simulated_tempering(g, ladder, start, 0, cfg)
        final = rec.final_state[0]
    row.update(
        first_hit_size=rec.first_hit_size,
        first_hit_overlap=rec.first_hit_overlap,
        steps_run=rec.steps_run,
        final_size=final.size,
        final_overlap=final.pc_overlap,
        removals=rec.removals_count,
    )
    if cell["baseline"]:
        row["topk_overlap"] = graph_model.top_k_degrees(g).overlap
    return row


def _run_job(args):
    cell, trial, master = args
    t0 = time.perf_counter()
    row = run_trial(cell, trial, master)
    return (cell["cell"], trial), row, time.perf_counter() - t0


def _median(xs):
    return statistics.median(xs) if xs else None


def aggregate(cell: dict, rows: list[dict]) -> dict:
    """Per-cell statistics.  Censored trials (no hit within T) count against the
    hit fraction and are left out of the medians; nothing is imputed."""
    t = len(rows)
    hs = [r["first_hit_size"] for r in rows if r["first_hit_size"] is not None]
    ho = [r["first_hit_overlap"] for r in rows if r["first_hit_overlap"] is not None]
    finals = [r["final_size"] for r in rows if r["final_size"] is not None]
    topk = [r["topk_overlap"] for r in rows if r["topk_overlap"] is not None]
    size_on = cell["size_target"] is not None
    over_on = cell["overlap_target"] is not None and cell["dynamics"] not in ("birth_death_1d", "birth_death_2d")
    return {
        "cell": cell["cell"], "n": cell["n"], "k": cell["k"], "dynamics": cell["dynamics"],
        "beta": cell["beta"], "size_target": cell["size_target"], "overlap_target": cell["overlap_target"],
        "max_steps": cell["max_steps"], "trials": t, "config_hash": cell["config_hash"],
        "hit_fraction_size": (len(hs) / t) if (t and size_on) else None,
        "hit_fraction_overlap": (len(ho) / t) if (t and over_on) else None,
        "median_hit_size": _median(hs),
        "median_hit_overlap": _median(ho),
        "censored_size": (t - len(hs)) if size_on else None,
        "censored_overlap": (t - len(ho)) if over_on else None,
        "mean_final_size": statistics.fmean(finals) if finals else None,
        "mean_topk_overlap": statistics.fmean(topk) if topk else None,
    }


@dataclass
class SweepResult:
    plan: ExperimentPlan
    cells: list[dict]
    rows: list[dict]
    summaries: list[dict]
    wall_clock: dict

    def summary_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "name": self.plan.name,
            "master_seed": self.plan.master_seed,
            "trials_per_cell": self.plan.trials,
            "cells": [{**c, "summary": s} for c, s in zip(self.cells, self.summaries)],
        }


def resolve_workers(plan_workers: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            w = int(env)
        except ValueError:
            raise InvalidParameterError(f"{WORKERS_ENV} must be an integer") from None
        if w < 1:
            raise InvalidParameterError(f"{WORKERS_ENV} must be >= 1")
        return w
    return plan_workers


def _check_writable(out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    probe = out_dir / ".write_probe"
    probe.write_text("")
    probe.unlink()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def run_sweep(plan: ExperimentPlan, out_dir: str | Path | None = None, workers: int | None = None) -> SweepResult:
    """Run every (cell, trial) pair and, if ``out_dir`` is given, write
    ``trials.csv``, ``cells.csv``, ``summary.json`` and ``timing.json``.

    Everything except ``timing.json`` is byte-identical for a given plan at any
    worker count.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        _check_writable(out)
    cells = plan.cells()
    w = workers if workers is not None else resolve_workers(plan.workers)
    jobs = [(c, t, plan.master_seed) for c in cells for t in range(plan.trials)]
    t0 = time.perf_counter()
    if w == 1 or len(jobs) <= 1:
        results = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=w) as pool:
            results = list(pool.map(_run_job, jobs))
    elapsed = time.perf_counter() - t0
    results.sort(key=lambda r: r[0])
    rows = [r[1] for r in results]
    per_cell = {c["cell"]: [] for c in cells}
    for row in rows:
        per_cell[row["cell"]].append(row)
    summaries = [aggregate(c, per_cell[c["cell"]]) for c in cells]
    timing = {
        "workers": w,
        "total_seconds": elapsed,
        "trial_seconds": {f"{k[0]}:{k[1]}": s for k, _, s in results},
    }
    result = SweepResult(plan, cells, rows, summaries, timing)
    if out is not None:
        _write_csv(out / "trials.csv", TRIAL_COLUMNS, rows)
        _write_csv(out / "cells.csv", CELL_COLUMNS, summaries)
        (out / "summary.json").write_text(json.dumps(result.summary_json(), indent=2, sort_keys=True) + "\n")
        (out / "timing.json").write_text(json.dumps(timing, indent=2, sort_keys=True) + "\n")
    return result
