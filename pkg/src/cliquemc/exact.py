"""Exhaustive oracles for small instances.

Everything here works on the full clique lattice of a graph (empty clique
included): enumeration, censuses, partition functions, bottleneck ratios,
gateways, exact transition matrices, stationary laws and hitting times.
States are indexed by :class:`StateSpaceIndex`, which requires n <= 64 so that
a clique fits in one uint64 mask.
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import logsumexp

from . import _bits
from .chains import CliqueState, birth_death_1d_probs, birth_death_2d_probs
from .errors import BudgetExceededError, InvalidParameterError, InvalidStateError, UnreachableError
from .graph_model import PlantedGraph, VertexSet
from .hamiltonian import GibbsWeightContext, TemperingLadder

UNBOUNDED = None
DEFAULT_MAX_STATES = 200_000
DEFAULT_NODE_BUDGET = 50_000_000
DENSE_LIMIT = 3000


def _popcount(masks: np.ndarray) -> np.ndarray:
    return np.bitwise_count(masks.astype(np.uint64)).astype(np.int64)


@dataclass(eq=False)
class StateSpaceIndex:
    """All cliques of a graph as uint64 masks, in DFS (lexicographic) order.

    ``masks[0]`` is always the empty clique.
    """

    n: int
    masks: np.ndarray
    planted_mask: int
    complete: bool = True
    sizes: np.ndarray = field(init=False, repr=False)
    overlaps: np.ndarray = field(init=False, repr=False)
    _order: np.ndarray = field(init=False, repr=False)
    _sorted: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.masks = np.asarray(self.masks, dtype=np.uint64)
        self.sizes = _popcount(self.masks)
        self.overlaps = _popcount(self.masks & np.uint64(self.planted_mask))
        self._order = np.argsort(self.masks, kind="stable")
        self._sorted = self.masks[self._order]

    def __len__(self) -> int:
        return int(self.masks.size)

    @property
    def sorted_masks(self) -> np.ndarray:
        return self._sorted

    def lookup(self, masks) -> np.ndarray:
        """Index of each mask, -1 where it is not a clique."""
        q = np.asarray(masks, dtype=np.uint64)
        pos = np.searchsorted(self._sorted, q)
        pos = np.minimum(pos, self._sorted.size - 1)
        hit = self._sorted[pos] == q
        return np.where(hit, self._order[pos], -1)

    def from_sorted(self, values: np.ndarray) -> np.ndarray:
        """Reorder per-state values given in ``sorted_masks`` order (as chain
        occupancy counts are) into index order; extra trailing axes are kept."""
        values = np.asarray(values)
        out = np.empty_like(values)
        out[self._order] = values
        return out

    def index_of(self, clique) -> int:
        if isinstance(clique, CliqueState):
            clique = clique.members
        bits = clique.bits if isinstance(clique, VertexSet) else sum(1 << v for v in clique)
        i = int(self.lookup([bits])[0])
        if i < 0:
            raise InvalidStateError(f"{sorted(VertexSet(self.n, bits))} is not a clique")
        return i

    def clique(self, i: int) -> VertexSet:
        return VertexSet(self.n, int(self.masks[i]))

    def state(self, i: int) -> CliqueState:
        return CliqueState(self.clique(i), int(self.sizes[i]), int(self.overlaps[i]))

    def neighbor_table(self) -> np.ndarray:
        """``T[i, v]`` = index of clique i XOR {v}, or -1 if that is not a clique (cached)."""
        cached = self.__dict__.get("_nbr")
        if cached is None:
            cached = np.empty((len(self), self.n), dtype=np.int64)
            for v in range(self.n):
                cached[:, v] = self.lookup(self.masks ^ np.uint64(1 << v))
            self.__dict__["_nbr"] = cached
        return cached


def enumerate_cliques(
    g: PlantedGraph, max_size: int | None = UNBOUNDED, budget: int = DEFAULT_MAX_STATES
) -> StateSpaceIndex:
    """Every clique of ``g`` with at most ``max_size`` vertices (all when unbounded).

    Raises BudgetExceededError when more than ``budget`` cliques exist.
    """
    if g.n > 64:
        raise InvalidParameterError("clique indices need n <= 64; use census_graph for larger n")
    if budget < 1:
        raise InvalidParameterError("budget must be >= 1")
    ms = g.n if max_size is None else int(max_size)
    if ms < 0:
        raise InvalidParameterError("max_size must be >= 0")
    words = np.ascontiguousarray(g.words[:, 0]) if g.n else np.zeros(0, dtype=np.uint64)
    masks, complete = _bits.enumerate_kernel(words, g.n, ms, budget)
    if not complete:
        raise BudgetExceededError(f"more than {budget} cliques; enumeration aborted")
    return StateSpaceIndex(g.n, masks, g.planted.bits)


# --- census ---------------------------------------------------------------


@dataclass(frozen=True)
class CliqueCensus:
    """``counts[q, r]`` = number of cliques of size q meeting the planted set in r vertices."""

    counts: np.ndarray
    n: int
    k: int
    fingerprint: str

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def max_size(self) -> int:
        nz = np.nonzero(self.counts.sum(axis=1))[0]
        return int(nz[-1]) if nz.size else 0

    def get(self, q: int, r: int) -> int:
        if 0 <= q < self.counts.shape[0] and 0 <= r < self.counts.shape[1]:
            return int(self.counts[q, r])
        return 0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["q", "r", "count"])
        for q in range(self.max_size + 1):
            for r in range(min(q, self.k) + 1):
                w.writerow([q, r, self.get(q, r)])
        return buf.getvalue()


def census(idx: StateSpaceIndex, g: PlantedGraph) -> CliqueCensus:
    if not idx.complete:
        raise InvalidStateError("census needs a complete index")
    size = int(idx.sizes.max()) + 1
    counts = np.zeros((size, size), dtype=np.int64)
    np.add.at(counts, (idx.sizes, idx.overlaps), 1)
    return CliqueCensus(counts, g.n, g.k, g.fingerprint())


def census_graph(g: PlantedGraph, max_size: int | None = UNBOUNDED, budget: int = DEFAULT_NODE_BUDGET) -> CliqueCensus:
    """Census straight from the bitset DFS, without storing cliques (any n)."""
    ms = g.n if max_size is None else int(max_size)
    table, _, complete = _bits.census_kernel(g.words, g.planted_flags, g.n, ms, budget)
    if not complete:
        raise BudgetExceededError(f"more than {budget} cliques; census aborted")
    rows = np.nonzero(table.sum(axis=1))[0]
    top = int(rows[-1]) + 1 if rows.size else 1
    return CliqueCensus(table[:top, :top].copy(), g.n, g.k, g.fingerprint())


# --- partition functions --------------------------------------------------


@dataclass(frozen=True)
class PartitionFunctions:
    log_z: float
    log_z_size: np.ndarray
    log_z_overlap: np.ndarray
    log_z_overlap_le: np.ndarray


def partition_functions(source, ctx: GibbsWeightContext) -> PartitionFunctions:
    """log Z, log Z_{q,*}, log Z_{*,r} and log Z_{*,<=r} from a census (or an index)."""
    if isinstance(source, StateSpaceIndex):
        counts = np.zeros((int(source.sizes.max()) + 1,) * 2, dtype=np.int64)
        np.add.at(counts, (source.sizes, source.overlaps), 1)
    else:
        counts = source.counts
    qs = np.arange(counts.shape[0])
    if qs[-1] >= len(ctx.h):
        raise InvalidParameterError("Hamiltonian shorter than the largest clique")
    logw = ctx.beta * ctx.h.values[qs]
    with np.errstate(divide="ignore"):
        log_counts = np.log(counts.astype(np.float64))
    cell = log_counts + logw[:, None]
    log_z_size = logsumexp(cell, axis=1)
    log_z_overlap = logsumexp(cell, axis=0)
    log_z_le = np.logaddexp.accumulate(log_z_overlap)
    return PartitionFunctions(float(logsumexp(cell)), log_z_size, log_z_overlap, log_z_le)


def bottleneck_ratio_intersection(pf: PartitionFunctions, r: int) -> float:
    """log Z_{*,r} - log Z_{*,<=r}; -inf when no clique has overlap exactly r."""
    if r < 0:
        raise InvalidParameterError("r must be >= 0")
    if r >= pf.log_z_overlap.size:
        return -math.inf
    return float(pf.log_z_overlap[r] - pf.log_z_overlap_le[r])


# --- gateways and the large-clique bottleneck --------------------------------


def compute_gateways(idx: StateSpaceIndex, g: PlantedGraph, q: int) -> np.ndarray:
    """Boolean mask over states: True where the clique is a q-gateway.

    For each threshold p, a BFS from all q-cliques through cliques of size >= p
    marks the p-cliques that can reach size q without dropping below p.
    """
    if q < 0:
        raise InvalidParameterError("q must be >= 0")
    out = np.zeros(len(idx), dtype=bool)
    sources = np.nonzero(idx.sizes == q)[0]
    if sources.size == 0:
        return out
    nbr = idx.neighbor_table()
    for p in range(q + 1):
        seen = np.zeros(len(idx), dtype=bool)
        seen[sources] = True
        frontier = sources
        while frontier.size:
            cand = nbr[frontier].ravel()
            cand = cand[cand >= 0]
            cand = cand[(idx.sizes[cand] >= p) & ~seen[cand]]
            cand = np.unique(cand)
            seen[cand] = True
            frontier = cand
        out |= seen & (idx.sizes == p)
    return out


def reachable_avoiding(idx: StateSpaceIndex, start: int, blocked: np.ndarray) -> np.ndarray:
    """States reachable from ``start`` by paths whose interior avoids ``blocked``.

    Blocked states are collected when reached but never expanded.
    """
    nbr = idx.neighbor_table()
    seen = np.zeros(len(idx), dtype=bool)
    seen[start] = True
    queue = deque([start]) if not blocked[start] else deque()
    while queue:
        x = queue.popleft()
        for y in nbr[x]:
            if y >= 0 and not seen[y]:
                seen[y] = True
                if not blocked[y]:
                    queue.append(y)
    return seen


@dataclass
class BottleneckReport:
    q: int
    p: int
    r: int
    log_ratio: float
    size_b: int
    size_a: int
    claims: dict
    a_mask: np.ndarray = field(repr=False)
    b_mask: np.ndarray = field(repr=False)

    @property
    def claims_verified(self) -> bool:
        return all(self.claims.values())

    def as_dict(self) -> dict:
        return {
            "q": self.q,
            "p": self.p,
            "r": self.r,
            "log_ratio": None if math.isinf(self.log_ratio) else self.log_ratio,
            "log_ratio_is_neg_inf": self.log_ratio == -math.inf,
            "|B|": self.size_b,
            "|A|": self.size_a,
            "claims": self.claims,
            "claims_verified": self.claims_verified,
        }


def _log_z_subset(idx: StateSpaceIndex, ctx: GibbsWeightContext, mask: np.ndarray) -> float:
    if not mask.any():
        return -math.inf
    return float(logsumexp(ctx.beta * ctx.h.values[idx.sizes[mask]]))


def bottleneck_ratio_large_clique(
    idx: StateSpaceIndex, g: PlantedGraph, ctx: GibbsWeightContext, q: int, p: int, r: int
) -> BottleneckReport:
    """log Z(B) - log Z(A) for B = (Psi_q ∩ Omega_{p,<r}) ∪ Omega_{<q,r}.

    A holds the cliques reachable from the empty clique without passing through
    B, destinations in B included.  The three structural claims about (A, B) are
    checked on the instance and reported; the first (no edge from A minus B to
    the complement of A) holds by construction and raises if it does not.
    """
    if not 0 <= p <= q:
        raise InvalidParameterError("need 0 <= p <= q")
    if r < 0:
        raise InvalidParameterError("r must be >= 0")
    gw = compute_gateways(idx, g, q)
    sz, ov = idx.sizes, idx.overlaps
    b = (gw & (sz == p) & (ov < r)) | ((sz < q) & (ov == r))
    a = reachable_avoiding(idx, 0, b)
    nbr = idx.neighbor_table()
    interior = np.nonzero(a & ~b)[0]
    nb = nbr[interior].ravel()
    nb = nb[nb >= 0]
    claim1 = bool(np.all(a[nb]))
    claim2 = bool(np.all(~a[sz == q] & ~b[sz == q]))
    claim3 = bool(np.all((~a | b)[ov == r]))
    if not claim1:
        raise InvalidStateError("A minus B touches the complement of A; reachability bug")
    ratio = _log_z_subset(idx, ctx, b) - _log_z_subset(idx, ctx, a)
    return BottleneckReport(
        q, p, r, ratio, int(b.sum()), int(a.sum()),
        {"item1_no_edge_out_of_interior": claim1, "item2_q_cliques_outside": claim2, "item3_overlap_r_blocked": claim3},
        a, b,
    )


# --- transition matrices ------------------------------------------------------------


def metropolis_matrix(idx: StateSpaceIndex, ctx: GibbsWeightContext) -> sp.csr_matrix:
    """Exact single-flip Metropolis kernel; rejected and impossible proposals become holding."""
    n = idx.n
    if len(ctx.h) != n + 1:
        raise InvalidParameterError("Hamiltonian length must be n + 1")
    nbr = idx.neighbor_table()
    logw = ctx.beta * ctx.h.values
    rows, cols = np.nonzero(nbr >= 0)
    dest = nbr[rows, cols]
    la = np.minimum(0.0, logw[idx.sizes[dest]] - logw[idx.sizes[rows]])
    vals = np.exp(la) / n
    off = sp.csr_matrix((vals, (rows, dest)), shape=(len(idx), len(idx)))
    diag = 1.0 - np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(diag)).tocsr()


def tempering_matrix(idx: StateSpaceIndex, ladder: TemperingLadder) -> sp.csr_matrix:
    """Exact ST kernel on (clique, level) pairs; state ``x * (m + 1) + i``."""
    n, m1 = idx.n, ladder.m + 1
    a = ladder.level_move_prob
    N = len(idx) * m1
    blocks_r, blocks_c, blocks_v = [], [], []
    nbr = idx.neighbor_table()
    rows, cols = np.nonzero(nbr >= 0)
    dest = nbr[rows, cols]
    for i in range(m1):
        logw = ladder.betas[i] * ladder.h.values
        la = np.minimum(0.0, logw[idx.sizes[dest]] - logw[idx.sizes[rows]])
        blocks_r.append(rows * m1 + i)
        blocks_c.append(dest * m1 + i)
        blocks_v.append(a * np.exp(la) / n)
        for j in (i - 1, i + 1):
            if 0 <= j < m1:
                hx = ladder.h.values[idx.sizes]
                x = ladder.log_z_hat[i] - ladder.log_z_hat[j] + (ladder.betas[j] - ladder.betas[i]) * hx
                states = np.arange(len(idx))
                blocks_r.append(states * m1 + i)
                blocks_c.append(states * m1 + j)
                blocks_v.append((1 - a) / 2 * np.exp(np.minimum(0.0, x)))
    off = sp.csr_matrix(
        (np.concatenate(blocks_v), (np.concatenate(blocks_r), np.concatenate(blocks_c))), shape=(N, N)
    )
    diag = 1.0 - np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(diag)).tocsr()


def birth_death_1d_matrix(n: int, ctx: GibbsWeightContext, eta: float) -> sp.csr_matrix:
    down, up = birth_death_1d_probs(n, ctx, eta)
    s = np.arange(n + 1)
    P = sp.diags([down[1:], 1.0 - down - up, up[:-1]], [-1, 0, 1], shape=(n + 1, n + 1))
    assert np.allclose(P @ np.ones_like(s, dtype=float), 1.0)
    return P.tocsr()


def birth_death_2d_matrix(n: int, ladder: TemperingLadder, eta: float) -> sp.csr_matrix:
    """Exact 2D walk kernel; state ``s * (m + 1) + j``."""
    sd, su, td, tu = birth_death_2d_probs(n, ladder, eta)
    m1 = ladder.m + 1
    N = (n + 1) * m1
    S, J = np.meshgrid(np.arange(n + 1), np.arange(m1), indexing="ij")
    idx = (S * m1 + J).ravel()
    rows, cols, vals = [], [], []
    for probs, ds, dj in ((sd, -1, 0), (su, 1, 0), (td, 0, -1), (tu, 0, 1)):
        p = probs.ravel()
        keep = p > 0
        rows.append(idx[keep])
        cols.append(((S + ds) * m1 + (J + dj)).ravel()[keep])
        vals.append(p[keep])
    off = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    diag = 1.0 - np.asarray(off.sum(axis=1)).ravel()
    return (off + sp.diags(diag)).tocsr()


def kolmogorov_cycle_residual(n: int, ladder: TemperingLadder, eta: float) -> float:
    """Largest relative gap between the two orientations of each unit-square cycle
    of the 2D walk (0 when both products vanish)."""
    sd, su, td, tu = birth_death_2d_probs(n, ladder, eta)
    worst = 0.0
    for s in range(n):
        for j in range(ladder.m):
            fwd = su[s, j] * tu[s + 1, j] * sd[s + 1, j + 1] * td[s, j + 1]
            back = tu[s, j] * su[s, j + 1] * td[s + 1, j + 1] * sd[s + 1, j]
            top = max(fwd, back)
            if top > 0:
                worst = max(worst, abs(fwd - back) / top)
    return worst


# --- stationary laws -----------------------------------------------------------


def gibbs_distribution(idx: StateSpaceIndex, ctx: GibbsWeightContext) -> np.ndarray:
    logw = ctx.beta * ctx.h.values[idx.sizes]
    return np.exp(logw - logsumexp(logw))


def stationary_power(P: sp.spmatrix, tol: float = 1e-12, max_iter: int = 2_000_000) -> tuple[np.ndarray, int, bool]:
    """Power iteration on the lazy chain (I + P)/2 from the uniform vector.

    Stops when ||pi P - pi||_1 <= tol.  Returns ``(pi, iterations, converged)``.
    Small chains (up to ``DENSE_LIMIT`` states) square the lazy matrix instead of
    stepping, so ``iterations`` is the equivalent number of lazy steps, and keep
    squaring past ``tol`` until the residual stops improving.
    """
    N = P.shape[0]
    if N <= DENSE_LIMIT:
        return _stationary_squaring(P, tol)
    PT = P.T.tocsr()
    pi = np.full(N, 1.0 / N)
    for it in range(1, max_iter + 1):
        nxt = PT @ pi
        if np.abs(nxt - pi).sum() <= tol:
            return nxt / nxt.sum(), it, True
        pi = 0.5 * (pi + nxt)
        pi /= pi.sum()
    return pi, max_iter, False


def _stationary_squaring(P, tol: float) -> tuple[np.ndarray, int, bool]:
    D = P.toarray() if sp.issparse(P) else np.asarray(P, dtype=float)
    N = D.shape[0]
    L = 0.5 * (np.eye(N) + D)
    pi = np.full(N, 1.0 / N)
    best, stale, steps = math.inf, 0, 0
    for k in range(80):
        pi = pi @ L
        pi /= pi.sum()
        steps += 1 << k
        res = float(np.abs(pi @ D - pi).sum())
        if res < best * 0.5:
            best, stale = res, 0
        else:
            stale += 1
        if best <= tol and (stale >= 2 or res == 0.0):
            return pi, steps, True
        L = L @ L
    return pi, steps, best <= tol


def stationary_eigen(P) -> np.ndarray:
    """Left null vector of P - I via a dense solve with the normalisation row appended."""
    A = (P.toarray() if sp.issparse(P) else np.asarray(P)).T - np.eye(P.shape[0])
    A[-1, :] = 1.0
    b = np.zeros(P.shape[0])
    b[-1] = 1.0
    return np.linalg.solve(A, b)


def balance_residual(P: sp.spmatrix, pi: np.ndarray) -> float:
    """max_{x,y} |pi(x) P(x,y) - pi(y) P(y,x)|."""
    F = sp.diags(pi) @ P
    D = (F - F.T).tocoo()
    return float(np.abs(D.data).max()) if D.nnz else 0.0


@dataclass
class StationaryResult:
    pi: np.ndarray
    residual: float
    iterations: int
    converged: bool
    degenerate: bool
    matrix: sp.csr_matrix = field(repr=False)


def exact_stationary_and_balance(
    idx: StateSpaceIndex,
    g: PlantedGraph,
    ctx: GibbsWeightContext,
    max_states: int = DEFAULT_MAX_STATES,
    tol: float = 1e-12,
) -> StationaryResult:
    """Build the exact Metropolis matrix, power-iterate to ``tol`` and report the
    largest detailed-balance residual.

    ``degenerate`` is set when no proposal is ever rejected (the chain then
    alternates clique-size parity, e.g. beta = 0 on a complete graph); the lazy
    iteration still returns the stationary law.
    """
    if len(idx) > max_states:
        raise BudgetExceededError(f"{len(idx)} states exceed the limit {max_states}")
    P = metropolis_matrix(idx, ctx)
    pi, it, ok = stationary_power(P, tol)
    degenerate = bool(np.all(P.diagonal() <= 0.0))
    return StationaryResult(pi, balance_residual(P, pi), it, ok, degenerate, P)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())


# --- hitting times and escape probabilities -------------------------------------------


def _reach(P: sp.csr_matrix, sources: np.ndarray, reverse: bool = False) -> np.ndarray:
    A = (P.T if reverse else P).tocsr()
    seen = np.zeros(P.shape[0], dtype=bool)
    seen[sources] = True
    frontier = np.nonzero(seen)[0]
    while frontier.size:
        sub = A[frontier]
        nxt = np.unique(sub.indices[sub.data > 0])
        nxt = nxt[~seen[nxt]]
        seen[nxt] = True
        frontier = nxt
    return seen


def hitting_time_matrix(P, start: int, target: np.ndarray, rtol: float = 1e-8) -> float:
    """E[min{t : X_t in target} | X_0 = start] for a finite chain."""
    P = sp.csr_matrix(P)
    target = np.asarray(target, dtype=bool)
    if not target.any():
        raise UnreachableError("empty target set")
    if target[start]:
        return 0.0
    forward = _reach(P, np.array([start]))
    can_hit = _reach(P, np.nonzero(target)[0], reverse=True)
    if np.any(forward & ~can_hit):
        raise UnreachableError("target is not reached almost surely from the start state")
    live = np.nonzero(forward & ~target)[0]
    Q = P[live][:, live]
    A = (sp.eye(live.size) - Q).tocsc()
    b = np.ones(live.size)
    h, info = spla.bicgstab(A, b, rtol=rtol * 1e-2, maxiter=100 * live.size + 1000)
    if info != 0 or np.linalg.norm(A @ h - b) > rtol * np.linalg.norm(b):
        h = spla.spsolve(A, b)
    return float(h[np.searchsorted(live, start)])


def expected_hitting_time(
    idx: StateSpaceIndex,
    g: PlantedGraph,
    ctx: GibbsWeightContext,
    start,
    target: Callable[[CliqueState], bool] | np.ndarray,
) -> float:
    """Exact expected Metropolis hitting time of ``target`` from ``start``.

    ``target`` is a predicate on states or a boolean mask over the index.
    """
    i0 = idx.index_of(start)
    if callable(target):
        mask = np.array([bool(target(idx.state(i))) for i in range(len(idx))])
    else:
        mask = np.asarray(target, dtype=bool)
        if mask.shape != (len(idx),):
            raise InvalidParameterError("target mask must cover every indexed clique")
    return hitting_time_matrix(metropolis_matrix(idx, ctx), i0, mask)


def escape_probabilities(P, inside: np.ndarray, t: int) -> np.ndarray:
    """P(X_s leaves ``inside`` for some s <= t | X_0 = x), for every state x."""
    P = sp.csr_matrix(P)
    outside = ~np.asarray(inside, dtype=bool)
    u = outside.astype(float)
    for _ in range(t):
        u = np.where(outside, 1.0, P @ u)
    return u
