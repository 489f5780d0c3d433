"""Planted-clique random graphs G(n, 1/2, k) and their basic queries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import _bits
from .errors import InvalidParameterError

#: Identifier of the generation algorithm; bump if ``generate`` ever changes.
GENERATOR_VERSION = "pcg64-upper-triangle-v1"

EXHAUSTIVE = "exhaustive"


def log2_size_ceiling(n: int, eta: float) -> int:
    """``floor((1 - eta) * log2 n)`` with a guard against float round-off."""
    return int(math.floor((1.0 - eta) * math.log2(n) + 1e-9))


class VertexSet:
    """Fixed-width set of vertices of an ``n``-vertex graph, stored as an int bitmask."""

    __slots__ = ("n", "bits")

    def __init__(self, n: int, bits: int = 0):
        self.n = n
        self.bits = bits

    @classmethod
    def of(cls, n: int, members: Iterable[int]) -> "VertexSet":
        bits = 0
        for v in members:
            if not 0 <= v < n:
                raise InvalidParameterError(f"vertex {v} outside [0, {n})")
            bits |= 1 << int(v)
        return cls(n, bits)

    @classmethod
    def full(cls, n: int) -> "VertexSet":
        return cls(n, (1 << n) - 1)

    def __len__(self) -> int:
        return self.bits.bit_count()

    def __contains__(self, v: int) -> bool:
        return (self.bits >> v) & 1 == 1

    def __iter__(self) -> Iterator[int]:
        b = self.bits
        while b:
            low = b & -b
            yield low.bit_length() - 1
            b ^= low

    def __eq__(self, other: object) -> bool:
        if isinstance(other, VertexSet):
            return self.n == other.n and self.bits == other.bits
        if isinstance(other, (set, frozenset)):
            return set(self) == other
        return NotImplemented

    def __hash__(self) -> int:
        return hash((self.n, self.bits))

    def __repr__(self) -> str:
        return f"VertexSet(n={self.n}, {sorted(self)})"

    def __and__(self, other: "VertexSet") -> "VertexSet":
        return VertexSet(self.n, self.bits & other.bits)

    def __or__(self, other: "VertexSet") -> "VertexSet":
        return VertexSet(self.n, self.bits | other.bits)

    def __sub__(self, other: "VertexSet") -> "VertexSet":
        return VertexSet(self.n, self.bits & ~other.bits)

    def toggle(self, v: int) -> "VertexSet":
        return VertexSet(self.n, self.bits ^ (1 << v))

    def issubset(self, other: "VertexSet") -> bool:
        return self.bits & ~other.bits == 0

    def to_array(self) -> np.ndarray:
        return np.fromiter(iter(self), dtype=np.int64)


@dataclass(frozen=True, eq=False)
class PlantedGraph:
    """Immutable planted-clique graph.

    ``adjacency`` is a read-only boolean matrix; ``words`` the same rows packed
    into uint64 bitsets for the numba kernels.
    """

    n: int
    k: int
    adjacency: np.ndarray
    planted: VertexSet
    seed: int | None = None
    words: np.ndarray = field(init=False, repr=False)
    planted_flags: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        adj = np.ascontiguousarray(self.adjacency, dtype=bool)
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        words = _bits.pack_rows(adj)
        words.setflags(write=False)
        object.__setattr__(self, "words", words)
        flags = np.zeros(self.n, dtype=np.int64)
        flags[self.planted.to_array()] = 1
        flags.setflags(write=False)
        object.__setattr__(self, "planted_flags", flags)

    @property
    def row_bits(self) -> list[int]:
        """Adjacency rows as Python int bitmasks (cached)."""
        cached = self.__dict__.get("_row_bits")
        if cached is None:
            cached = [_row_to_int(row) for row in self.adjacency]
            object.__setattr__(self, "_row_bits", cached)
        return cached

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1).astype(np.int64)

    def is_clique(self, members: VertexSet) -> bool:
        rows = self.row_bits
        for v in members:
            if (members.bits & ~(1 << v)) & ~rows[v]:
                return False
        return True

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(f"{self.n}:{self.k}:".encode())
        h.update(np.packbits(self.adjacency).tobytes())
        h.update(self.planted.bits.to_bytes((self.n + 7) // 8 or 1, "little"))
        return h.hexdigest()[:16]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PlantedGraph):
            return NotImplemented
        return (
            self.n == other.n
            and self.k == other.k
            and self.planted == other.planted
            and np.array_equal(self.adjacency, other.adjacency)
        )

    __hash__ = object.__hash__


def _row_to_int(row: np.ndarray) -> int:
    packed = np.packbits(row.astype(bool), bitorder="little")
    return int.from_bytes(packed.tobytes(), "little")


def from_adjacency(adjacency, planted: Iterable[int] = (), seed: int | None = None) -> PlantedGraph:
    """Wrap an explicit symmetric 0/1 matrix (fixtures, deserialization)."""
    adj = np.array(adjacency, dtype=bool)
    n = adj.shape[0]
    if adj.shape != (n, n):
        raise InvalidParameterError("adjacency must be square")
    if np.any(np.diag(adj)):
        raise InvalidParameterError("adjacency must have a zero diagonal")
    if not np.array_equal(adj, adj.T):
        raise InvalidParameterError("adjacency must be symmetric")
    pc = VertexSet.of(n, planted)
    for u in pc:
        for v in pc:
            if u != v and not adj[u, v]:
                raise InvalidParameterError("planted set is not a clique")
    return PlantedGraph(n=n, k=len(pc), adjacency=adj, planted=pc, seed=seed)


def generate(n: int, k: int, seed: int) -> PlantedGraph:
    """Sample G(n, 1/2) with a uniformly chosen planted k-clique.

    Uses numpy's PCG64 seeded with ``seed``: first the planted set
    (``Generator.choice`` without replacement), then one uniform per entry of
    the strict upper triangle in row-major order, edge iff uniform < 1/2.
    """
    if n < 1:
        raise InvalidParameterError(f"n must be positive, got {n}")
    if not 0 <= k <= n:
        raise InvalidParameterError(f"planted size k={k} must lie in [0, n={n}]")
    rng = np.random.default_rng(seed)
    planted = np.sort(rng.choice(n, size=k, replace=False)) if k else np.zeros(0, np.int64)
    iu = np.triu_indices(n, 1)
    edges = rng.random(iu[0].size) < 0.5
    adj = np.zeros((n, n), dtype=bool)
    adj[iu] = edges
    adj |= adj.T
    if k:
        adj[np.ix_(planted, planted)] = True
        adj[planted, planted] = False
    return PlantedGraph(n=n, k=k, adjacency=adj, planted=VertexSet.of(n, planted.tolist()), seed=seed)


def common_neighbors(g: PlantedGraph, u: VertexSet) -> VertexSet:
    """A(U): vertices outside U adjacent to every member of U."""
    acc = (1 << g.n) - 1
    rows = g.row_bits
    for v in u:
        acc &= rows[v]
    return VertexSet(g.n, acc & ~u.bits)


@dataclass
class ExpansionReport:
    n: int
    eta: float
    max_size: int
    exhaustive: bool
    complete: bool
    cliques_checked: int
    violation_count: int
    violations: list[tuple[int, ...]]
    min_ratio: float
    min_ratio_size: int

    @property
    def ok(self) -> bool:
        return self.complete and self.violation_count == 0


def check_expansion(
    g: PlantedGraph,
    eta: float,
    sample_budget: int | str = EXHAUSTIVE,
    *,
    node_budget: int = 50_000_000,
    fallback_samples: int = 10_000,
    max_violations: int = 0,
    store_violations: int = 100,
    seed: int = 0,
) -> ExpansionReport:
    """Check ``|A(C)| >= n / (20 * 2^|C|)`` over cliques with ``|C| <= (1-eta) log2 n``.

    Only cliques are checked, not arbitrary vertex subsets.  With
    ``sample_budget=EXHAUSTIVE`` every such clique is enumerated, unless more
    than ``node_budget`` cliques would be visited, in which case the check falls
    back to ``fallback_samples`` sampled growth paths and reports
    ``exhaustive=False``.  An integer ``sample_budget`` grows that many random
    cliques from the empty set, checking every prefix.  ``max_violations > 0``
    stops the exhaustive search after that many violations (``complete=False``).
    """
    if g.n < 2:
        raise InvalidParameterError("expansion check needs n >= 2")
    if not 0 < eta < 1:
        raise InvalidParameterError(f"eta must lie in (0, 1), got {eta}")
    if sample_budget != EXHAUSTIVE and (not isinstance(sample_budget, int) or sample_budget <= 0):
        raise InvalidParameterError("sample_budget must be a positive integer or EXHAUSTIVE")
    max_size = max(0, log2_size_ceiling(g.n, eta))
    if sample_budget == EXHAUSTIVE:
        nodes, n_viol, stored, sizes, min_a, min_size, complete = _bits.expansion_kernel(
            g.words, g.n, max_size, node_budget, max_violations, store_violations
        )
        stopped_on_budget = not complete and not (max_violations > 0 and n_viol >= max_violations)
        if not stopped_on_budget:
            violations = [tuple(int(x) for x in stored[i, : sizes[i]]) for i in range(min(n_viol, store_violations))]
            return ExpansionReport(
                n=g.n,
                eta=eta,
                max_size=max_size,
                exhaustive=True,
                complete=complete,
                cliques_checked=int(nodes),
                violation_count=int(n_viol),
                violations=violations,
                min_ratio=min_a * 2.0**min_size / g.n,
                min_ratio_size=int(min_size),
            )
        sample_budget = fallback_samples
    return _sampled_expansion(g, eta, max_size, int(sample_budget), store_violations, seed)


def _sampled_expansion(g, eta, max_size, budget, store_cap, seed) -> ExpansionReport:
    rng = np.random.default_rng(seed)
    rows = g.row_bits
    full = (1 << g.n) - 1
    checked = 0
    violations: list[tuple[int, ...]] = []
    n_viol = 0
    best = (1.0, 0)
    for _ in range(budget):
        members: list[int] = []
        common = full
        while True:
            a = common.bit_count()
            s = len(members)
            checked += 1
            ratio = a * 2.0**s / g.n
            if ratio < best[0]:
                best = (ratio, s)
            if a * 20 * 2**s < g.n:
                n_viol += 1
                if len(violations) < store_cap:
                    violations.append(tuple(sorted(members)))
            if s >= max_size or a == 0:
                break
            # uniform member of A(C)
            idx = int(rng.integers(a))
            b = common
            for _ in range(idx):
                b &= b - 1
            v = (b & -b).bit_length() - 1
            members.append(v)
            common &= rows[v]
    return ExpansionReport(
        n=g.n,
        eta=eta,
        max_size=max_size,
        exhaustive=False,
        complete=True,
        cliques_checked=checked,
        violation_count=n_viol,
        violations=violations,
        min_ratio=best[0],
        min_ratio_size=best[1],
    )


@dataclass(frozen=True)
class DegreeBaseline:
    vertices: VertexSet
    overlap: int


def top_k_degrees(g: PlantedGraph, k: int | None = None) -> DegreeBaseline:
    """The ``k`` highest-degree vertices (ties to the lower index) and their planted overlap."""
    k = g.k if k is None else k
    if k <= 0:
        return DegreeBaseline(VertexSet(g.n), 0)
    deg = g.degrees()
    # lexsort: last key primary -> sort by -degree, then by index
    order = np.lexsort((np.arange(g.n), -deg))
    chosen = VertexSet.of(g.n, order[:k].tolist())
    return DegreeBaseline(chosen, len(chosen & g.planted))


# --- serialization --------------------------------------------------------

HEADER_TAG = "pcgraph v1"


def dumps(g: PlantedGraph) -> str:
    """Text form: header, planted line, then one hex row per vertex.

    Row ``u`` is the integer ``sum(2**v for v adjacent to u)`` written as
    ``ceil(n/4)`` lower-case hex digits, most significant first.
    """
    width = (g.n + 3) // 4
    seed = "none" if g.seed is None else str(g.seed)
    lines = [f"{HEADER_TAG} n={g.n} k={g.k} seed={seed}", " ".join(str(v) for v in g.planted)]
    lines += [format(bits, f"0{width}x") for bits in g.row_bits]
    return "\n".join(lines) + "\n"


def loads(text: str) -> PlantedGraph:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(HEADER_TAG):
        raise InvalidParameterError("missing 'pcgraph v1' header")
    fields = dict(tok.split("=", 1) for tok in lines[0][len(HEADER_TAG):].split())
    n, k = int(fields["n"]), int(fields["k"])
    seed = None if fields.get("seed", "none") == "none" else int(fields["seed"])
    if len(lines) < n + 2:
        raise InvalidParameterError(f"expected {n} adjacency rows")
    planted = [int(x) for x in lines[1].split()]
    if len(planted) != k:
        raise InvalidParameterError(f"header says k={k} but {len(planted)} planted vertices listed")
    adj = np.zeros((n, n), dtype=bool)
    for u in range(n):
        bits = int(lines[2 + u].strip(), 16)
        if bits >> n:
            raise InvalidParameterError(f"row {u} has bits beyond n")
        for v in VertexSet(n, bits):
            adj[u, v] = True
    return from_adjacency(adj, planted, seed=seed)


def save(g: PlantedGraph, path: str | Path) -> None:
    Path(path).write_text(dumps(g))


def load(path: str | Path) -> PlantedGraph:
    return loads(Path(path).read_text())
