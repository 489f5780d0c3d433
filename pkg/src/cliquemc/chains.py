"""Clique dynamics: Metropolis, greedy, simulated tempering and the birth-death
comparison walks, plus the explicit dominance coupling.

Single steps (``metropolis_step``, ``st_step``) are plain Python and consume the
random stream in the same order as the compiled loops in ``_kernels``; the
``run_*`` functions use the compiled loops.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import InvalidParameterError, InvalidStateError
from .graph_model import PlantedGraph, VertexSet, common_neighbors, log2_size_ceiling
from .hamiltonian import GibbsWeightContext, TemperingLadder, identity_hamiltonian, log_acceptance

RECORD_ALL_UP_TO = 100_000


class Dynamics(str, Enum):
    METROPOLIS = "metropolis"
    GREEDY = "greedy"
    SIMULATED_TEMPERING = "simulated_tempering"
    BIRTH_DEATH_1D = "birth_death_1d"
    BIRTH_DEATH_2D = "birth_death_2d"


@dataclass(frozen=True)
class CliqueState:
    members: VertexSet
    size: int
    pc_overlap: int

    @classmethod
    def of(cls, g: PlantedGraph, members=()) -> "CliqueState":
        vs = members if isinstance(members, VertexSet) else VertexSet.of(g.n, members)
        if not g.is_clique(vs):
            raise InvalidStateError(f"{sorted(vs)} is not a clique")
        return cls(vs, len(vs), len(vs & g.planted))

    @classmethod
    def empty(cls, g: PlantedGraph) -> "CliqueState":
        return cls(VertexSet(g.n), 0, 0)

    def check(self, g: PlantedGraph) -> None:
        if not g.is_clique(self.members):
            raise InvalidStateError("state is not a clique")
        if self.size != len(self.members) or self.pc_overlap != len(self.members & g.planted):
            raise InvalidStateError("cached size/overlap out of sync")


def stop_targets(n: int, epsilon: float | None, gamma: float | None) -> tuple[int | None, int | None]:
    """(ceil((1+eps) log2 n), ceil(gamma log2 n)); ``None`` disables a target."""
    lg = math.log2(n)
    size_t = None if epsilon is None else math.ceil((1 + epsilon) * lg - 1e-9)
    over_t = None if gamma is None else math.ceil(gamma * lg - 1e-9)
    return size_t, over_t


def default_thin(max_steps: int) -> int:
    return 1 if max_steps <= RECORD_ALL_UP_TO else math.ceil(max_steps / RECORD_ALL_UP_TO)


@dataclass
class ChainConfig:
    dynamics: Dynamics = Dynamics.METROPOLIS
    beta: float = 0.0
    ladder: TemperingLadder | None = None
    eta: float = 0.5
    max_steps: int = 0
    size_target: int | None = None
    overlap_target: int | None = None
    seed: int = 0
    thin: int | None = None
    debug: bool = False

    def __post_init__(self):
        self.dynamics = Dynamics(self.dynamics)
        if self.max_steps < 0:
            raise InvalidParameterError("max_steps must be >= 0")
        if not 0 < self.eta < 1:
            raise InvalidParameterError("eta must lie in (0, 1)")
        if self.dynamics in (Dynamics.SIMULATED_TEMPERING, Dynamics.BIRTH_DEATH_2D) and self.ladder is None:
            raise InvalidParameterError(f"{self.dynamics.value} needs a temperature ladder")

    @property
    def thin_interval(self) -> int:
        return self.thin if self.thin else default_thin(self.max_steps)

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass
class TrajectoryRecord:
    steps: np.ndarray
    sizes: np.ndarray
    overlaps: np.ndarray
    temp_indices: np.ndarray
    first_hit_size: int | None
    first_hit_overlap: int | None
    removals_count: int
    steps_run: int
    final_state: object
    seed: int | None = None
    first_hit_zero: int | None = None
    occupancy: np.ndarray | None = None
    config: dict = field(default_factory=dict)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "size", "overlap", "temp_index"])
            for row in zip(self.steps.tolist(), self.sizes.tolist(), self.overlaps.tolist(), self.temp_indices.tolist()):
                w.writerow(row)

    def summary(self) -> dict:
        final = self.final_state
        if isinstance(final, CliqueState):
            final = {"members": sorted(final.members), "size": final.size, "overlap": final.pc_overlap}
        elif isinstance(final, tuple) and final and isinstance(final[0], CliqueState):
            final = {
                "members": sorted(final[0].members),
                "size": final[0].size,
                "overlap": final[0].pc_overlap,
                "temp_index": final[1],
            }
        return {
            "schema_version": 1,
            "first_hit_size": self.first_hit_size,
            "first_hit_overlap": self.first_hit_overlap,
            "first_hit_zero": self.first_hit_zero,
            "removals_count": self.removals_count,
            "steps_run": self.steps_run,
            "seed": self.seed,
            "final_state": final,
            "config": self.config,
        }

    def write_summary(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Enum):
        return obj.value
    raise TypeError(type(obj))


def _none(x: int) -> int | None:
    return None if x < 0 else int(x)


def _target(x: int | None) -> int:
    return -1 if x is None else int(x)


# --- single steps -----------------------------------------------------------


def _apply_flip(g: PlantedGraph, ctx: GibbsWeightContext | None, state: CliqueState, v: int, u: float) -> CliqueState:
    """Algorithm-2 transition for proposal ``v``; ``ctx=None`` means beta = +inf (greedy)."""
    members = state.members
    if v in members:
        if ctx is None:
            return state
        if u < math.exp(log_acceptance(ctx, state.size, state.size - 1)):
            return CliqueState(members.toggle(v), state.size - 1, state.pc_overlap - (v in g.planted))
        return state
    if members.bits & ~g.row_bits[v]:
        return state
    if ctx is None or u < math.exp(log_acceptance(ctx, state.size, state.size + 1)):
        return CliqueState(members.toggle(v), state.size + 1, state.pc_overlap + (v in g.planted))
    return state


def metropolis_step(
    g: PlantedGraph, ctx: GibbsWeightContext, state: CliqueState, rng: np.random.Generator, debug: bool = False
) -> CliqueState:
    """One step: uniform v, flip it, accept with min{1, pi(C')/pi(C)} if C' is a clique."""
    v = int(rng.integers(0, g.n))
    u = rng.random()
    new = _apply_flip(g, ctx, state, v, u)
    if debug:
        new.check(g)
    return new


def greedy_step(g: PlantedGraph, state: CliqueState, rng: np.random.Generator) -> CliqueState:
    """Metropolis at beta = +inf with identity h: add v if possible, never remove."""
    v = int(rng.integers(0, g.n))
    rng.random()
    return _apply_flip(g, None, state, v, 0.0)


def st_step(
    g: PlantedGraph, ladder: TemperingLadder, state: tuple[CliqueState, int], rng: np.random.Generator
) -> tuple[CliqueState, int]:
    """One simulated-tempering step (level move w.p. a, else temperature move)."""
    clique, i = state
    if not 0 <= i <= ladder.m:
        raise InvalidParameterError(f"temperature index {i} outside [0, {ladder.m}]")
    if rng.random() < ladder.level_move_prob:
        return metropolis_step(g, ladder.context(i), clique, rng), i
    d = rng.random()
    u = rng.random()
    j = i - 1 if d < 0.5 else i + 1
    la = ladder.log_temperature_acceptance(i, j, clique.size)
    if la > -math.inf and u < math.exp(la):
        return clique, j
    return clique, i


# --- compiled runs -------------------------------------------------------------


def _buffers(g: PlantedGraph, start: CliqueState):
    members = np.zeros(g.n + 1, dtype=np.int64)
    pos = -np.ones(g.n, dtype=np.int64)
    for i, v in enumerate(start.members):
        members[i] = v
        pos[v] = i
    return members, pos


def _record_buffers(steps: int, thin: int):
    cap = steps // thin + 3
    return (
        np.zeros(cap, dtype=np.int64),
        np.zeros(cap, dtype=np.int64),
        np.zeros(cap, dtype=np.int64),
        np.zeros(cap, dtype=np.int64),
    )


def _final_clique(g: PlantedGraph, members: np.ndarray, size: int) -> CliqueState:
    vs = VertexSet.of(g.n, members[:size].tolist())
    return CliqueState(vs, size, len(vs & g.planted))


def _track_array(track) -> np.ndarray:
    if track is None:
        return np.zeros(0, dtype=np.uint64)
    arr = np.asarray(track, dtype=np.uint64)
    if arr.size and np.any(np.diff(arr.astype(np.float64)) < 0):
        raise InvalidParameterError("tracked masks must be sorted")
    return arr


def _check_start(g: PlantedGraph, start: CliqueState) -> None:
    if not g.is_clique(start.members):
        raise InvalidStateError("start is not a clique")
    if start.size != len(start.members) or start.pc_overlap != len(start.members & g.planted):
        raise InvalidStateError("start state has inconsistent cached size/overlap")


def _run_single(g, logw, greedy, start, cfg, rng, track):
    _check_start(g, start)
    if track is not None and g.n > 64:
        raise InvalidParameterError("state tracking needs n <= 64")
    rng = cfg.rng() if rng is None else rng
    thin = cfg.thin_interval
    members, pos = _buffers(g, start)
    rec = _record_buffers(cfg.max_steps, thin)
    track_arr = _track_array(track)
    occupancy = np.zeros(max(track_arr.size, 1), dtype=np.int64)
    size, overlap, t, hs, ho, removals, rc, ok = _kernels.metropolis_kernel(
        g.adjacency, g.planted_flags, logw, greedy, members, pos, start.size, start.pc_overlap,
        cfg.max_steps, rng, _target(cfg.size_target), _target(cfg.overlap_target), thin,
        *rec, track_arr, occupancy, cfg.debug,
    )
    if not ok:
        raise InvalidStateError(f"clique invariant broken at step {t}")
    return TrajectoryRecord(
        steps=rec[0][:rc].copy(),
        sizes=rec[1][:rc].copy(),
        overlaps=rec[2][:rc].copy(),
        temp_indices=rec[3][:rc].copy(),
        first_hit_size=_none(hs),
        first_hit_overlap=_none(ho),
        removals_count=int(removals),
        steps_run=int(t),
        final_state=_final_clique(g, members, size),
        seed=cfg.seed,
        occupancy=occupancy if track is not None else None,
        config=_config_echo(cfg),
    )


def _config_echo(cfg: ChainConfig) -> dict:
    out = {
        "dynamics": cfg.dynamics.value,
        "beta": cfg.beta,
        "eta": cfg.eta,
        "max_steps": cfg.max_steps,
        "size_target": cfg.size_target,
        "overlap_target": cfg.overlap_target,
        "seed": cfg.seed,
        "thin": cfg.thin_interval,
    }
    if cfg.ladder is not None:
        out["ladder_betas"] = cfg.ladder.betas.tolist()
        out["ladder_log_z_hat"] = cfg.ladder.log_z_hat.tolist()
        out["level_move_prob"] = cfg.ladder.level_move_prob
    return out


def run_metropolis(
    g: PlantedGraph,
    ctx: GibbsWeightContext,
    start: CliqueState,
    cfg: ChainConfig,
    rng: np.random.Generator | None = None,
    track=None,
) -> TrajectoryRecord:
    """Iterate the Metropolis kernel for up to ``cfg.max_steps`` steps.

    Stops early at the first step where either stop target is met.  ``track``
    (sorted uint64 clique masks, n <= 64) turns on per-state occupancy counts.
    """
    if cfg.dynamics is not Dynamics.METROPOLIS:
        raise InvalidParameterError("run_metropolis needs dynamics=METROPOLIS")
    logw = np.ascontiguousarray(ctx.log_weights(), dtype=np.float64)
    if logw.size != g.n + 1:
        raise InvalidParameterError("Hamiltonian length must be n + 1")
    return _run_single(g, logw, False, start, cfg, rng, track)


def run_greedy(
    g: PlantedGraph, start: CliqueState, cfg: ChainConfig, rng: np.random.Generator | None = None
) -> TrajectoryRecord:
    """Add the proposed vertex whenever the result is a clique; never remove."""
    logw = identity_hamiltonian(g.n).values.copy()
    return _run_single(g, logw, True, start, cfg, rng, None)


def run_simulated_tempering(
    g: PlantedGraph,
    ladder: TemperingLadder,
    start: CliqueState,
    start_temp: int,
    cfg: ChainConfig,
    rng: np.random.Generator | None = None,
    track=None,
) -> TrajectoryRecord:
    _check_start(g, start)
    if len(ladder.h) != g.n + 1:
        raise InvalidParameterError("Hamiltonian length must be n + 1")
    if not 0 <= start_temp <= ladder.m:
        raise InvalidParameterError("start temperature outside the ladder")
    if track is not None and g.n > 64:
        raise InvalidParameterError("state tracking needs n <= 64")
    rng = cfg.rng() if rng is None else rng
    thin = cfg.thin_interval
    members, pos = _buffers(g, start)
    rec = _record_buffers(cfg.max_steps, thin)
    track_arr = _track_array(track)
    occupancy = np.zeros(max(track_arr.size * (ladder.m + 1), 1), dtype=np.int64)
    logw = np.ascontiguousarray(np.outer(ladder.betas, ladder.h.values))
    size, overlap, temp, t, hs, ho, removals, rc, ok = _kernels.tempering_kernel(
        g.adjacency, g.planted_flags, logw, ladder.betas, ladder.log_z_hat, ladder.h.values,
        ladder.level_move_prob, members, pos, start.size, start.pc_overlap, start_temp,
        cfg.max_steps, rng, _target(cfg.size_target), _target(cfg.overlap_target), thin,
        *rec, track_arr, occupancy, cfg.debug,
    )
    if not ok:
        raise InvalidStateError(f"clique invariant broken at step {t}")
    return TrajectoryRecord(
        steps=rec[0][:rc].copy(),
        sizes=rec[1][:rc].copy(),
        overlaps=rec[2][:rc].copy(),
        temp_indices=rec[3][:rc].copy(),
        first_hit_size=_none(hs),
        first_hit_overlap=_none(ho),
        removals_count=int(removals),
        steps_run=int(t),
        final_state=(_final_clique(g, members, size), int(temp)),
        seed=cfg.seed,
        occupancy=occupancy.reshape(-1, ladder.m + 1) if track is not None else None,
        config=_config_echo(cfg),
    )


# --- birth-death comparison walks ------------------------------------------------


def birth_death_1d_probs(n: int, ctx: GibbsWeightContext, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """(P(s, s-1), P(s, s+1)) for s = 0..n."""
    if not 0 < eta < 1:
        raise InvalidParameterError(f"eta must lie in (0, 1), got {eta}")
    h = ctx.h.values
    ceiling = log2_size_ceiling(n, eta)
    down = np.zeros(n + 1)
    up = np.zeros(n + 1)
    for s in range(1, n + 1):
        down[s] = s / n * math.exp(min(0.0, ctx.beta * (h[s - 1] - h[s])))
    for s in range(0, min(ceiling, n)):
        up[s] = math.exp(min(0.0, ctx.beta * (h[s + 1] - h[s]))) / (20.0 * 2.0**s)
    return down, up


def birth_death_2d_probs(n: int, ladder: TemperingLadder, eta: float):
    """Per-state move probabilities of the 2D walk, arrays of shape (n+1, m+1).

    Returns ``(size_down, size_up, temp_down, temp_up)``; off-grid moves get 0.
    """
    if not 0 < eta < 1:
        raise InvalidParameterError(f"eta must lie in (0, 1), got {eta}")
    a = ladder.level_move_prob
    m = ladder.m
    shape = (n + 1, m + 1)
    sd, su, td, tu = (np.zeros(shape) for _ in range(4))
    for j in range(m + 1):
        down, up = birth_death_1d_probs(n, ladder.context(j), eta)
        sd[:, j] = a * down
        su[:, j] = a * up
        for s in range(n + 1):
            if j > 0:
                td[s, j] = (1 - a) / 2 * math.exp(ladder.log_temperature_acceptance(j, j - 1, s))
            if j < m:
                tu[s, j] = (1 - a) / 2 * math.exp(ladder.log_temperature_acceptance(j, j + 1, s))
    return sd, su, td, tu


def _bd_run(p_down, p_up, p_tdown, p_tup, s0, j0, cfg, rng):
    rng = cfg.rng() if rng is None else rng
    thin = cfg.thin_interval
    cap = cfg.max_steps // thin + 3
    rec_step = np.zeros(cap, dtype=np.int64)
    rec_size = np.zeros(cap, dtype=np.int64)
    rec_temp = np.zeros(cap, dtype=np.int64)
    occupancy = np.zeros(p_down.shape, dtype=np.int64)
    s, j, t, hz, hs, rc = _kernels.birth_death_kernel(
        p_down, p_up, p_tdown, p_tup, s0, j0, cfg.max_steps, rng, _target(cfg.size_target), thin,
        rec_step, rec_size, rec_temp, occupancy,
    )
    return TrajectoryRecord(
        steps=rec_step[:rc].copy(),
        sizes=rec_size[:rc].copy(),
        overlaps=np.zeros(rc, dtype=np.int64),
        temp_indices=rec_temp[:rc].copy(),
        first_hit_size=_none(hs),
        first_hit_overlap=None,
        removals_count=0,
        steps_run=int(t),
        final_state=(int(s), int(j)),
        seed=cfg.seed,
        first_hit_zero=_none(hz),
        occupancy=occupancy,
        config=_config_echo(cfg),
    )


def run_birth_death_1d(
    n: int, ctx: GibbsWeightContext, eta: float, start_size: int, cfg: ChainConfig,
    rng: np.random.Generator | None = None,
) -> TrajectoryRecord:
    """Simulate the 1D size walk; ``occupancy`` is a length-(n+1) vector of visit counts."""
    if not 0 <= start_size <= n:
        raise InvalidParameterError("start size outside [0, n]")
    down, up = birth_death_1d_probs(n, ctx, eta)
    zeros = np.zeros((n + 1, 1))
    rec = _bd_run(down[:, None].copy(), up[:, None].copy(), zeros, zeros, start_size, 0, cfg, rng)
    rec.occupancy = rec.occupancy[:, 0].copy()
    rec.final_state = rec.final_state[0]
    return rec


def run_birth_death_2d(
    n: int, m: int, ladder: TemperingLadder, eta: float, start: tuple[int, int], cfg: ChainConfig,
    rng: np.random.Generator | None = None,
) -> TrajectoryRecord:
    """Simulate the (size, temperature) walk; occupancy has shape (n+1, m+1)."""
    if m != ladder.m:
        raise InvalidParameterError(f"ladder has m={ladder.m}, got m={m}")
    if not ladder.h.is_monotone():
        raise InvalidParameterError("the 2D walk requires a monotone Hamiltonian")
    s0, j0 = start
    if not (0 <= s0 <= n and 0 <= j0 <= ladder.m):
        raise InvalidParameterError("start outside [0, n] x [0, m]")
    probs = birth_death_2d_probs(n, ladder, eta)
    return _bd_run(*probs, s0, j0, cfg, rng)


# --- dominance coupling -------------------------------------------------------------


@dataclass
class DominanceReport:
    trials: int
    steps: int
    violations: int
    precondition_failures: int
    final_sizes: list[int]
    final_y: list[int]

    @property
    def status(self) -> str:
        if self.precondition_failures:
            return "COUPLING_PRECONDITION_FAILED"
        return "OK" if self.violations == 0 else "DOMINANCE_VIOLATED"

    def as_dict(self) -> dict:
        d = asdict(self)
        d["status"] = self.status
        return d


def check_dominance(
    g: PlantedGraph,
    ctx: GibbsWeightContext,
    eta: float,
    start_clique: CliqueState,
    steps: int,
    trials: int,
    seed: int,
) -> DominanceReport:
    """Run the size-domination coupling ``trials`` times and count Y_t > |X_t|.

    The birth-death chain starts at ``|start_clique|``.  Each trial uses the
    generator spawned from ``SeedSequence(seed)`` at its index.
    """
    _check_start(g, start_clique)
    if not 0 < eta < 1:
        raise InvalidParameterError(f"eta must lie in (0, 1), got {eta}")
    y_down, y_up = birth_death_1d_probs(g.n, ctx, eta)
    ceiling = log2_size_ceiling(g.n, eta)
    logw = np.ascontiguousarray(ctx.log_weights(), dtype=np.float64)
    total_v = total_f = 0
    finals, final_y = [], []
    for child in np.random.SeedSequence(seed).spawn(trials):
        rng = np.random.default_rng(child)
        members, pos = _buffers(g, start_clique)
        size, _, y, viol, fail = _kernels.dominance_kernel(
            g.adjacency, g.words, g.planted_flags, logw, members, pos, start_clique.size,
            start_clique.pc_overlap, start_clique.size, steps, rng, ceiling, y_down, y_up,
        )
        total_v += int(viol)
        total_f += int(fail)
        finals.append(int(size))
        final_y.append(int(y))
    return DominanceReport(trials, steps, total_v, total_f, finals, final_y)


def expansion_ok_for(g: PlantedGraph, clique: CliqueState, eta: float) -> bool:
    """Whether ``clique`` satisfies the common-neighbour bound used by the coupling."""
    if clique.size > log2_size_ceiling(g.n, eta):
        return True
    return len(common_neighbors(g, clique.members)) * 20 * 2**clique.size >= g.n
