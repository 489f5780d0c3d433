"""Small shipped instances and the invariant suites behind ``cliquemc verify``."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import analytics, chains, exact
from .graph_model import PlantedGraph, VertexSet, from_adjacency, generate
from .hamiltonian import GibbsWeightContext, HamiltonianSpec, TemperingLadder, custom_hamiltonian, identity_hamiltonian


def complete_graph(n: int, planted=()) -> PlantedGraph:
    return from_adjacency(~np.eye(n, dtype=bool), planted)


def path_graph(n: int) -> PlantedGraph:
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n - 1):
        adj[i, i + 1] = adj[i + 1, i] = True
    return from_adjacency(adj, ())


def wavy_hamiltonian(n: int) -> HamiltonianSpec:
    """A regular, monotone, non-linear h: h_q = 0.8 q + 0.15 sin q."""
    q = np.arange(n + 1, dtype=float)
    return custom_hamiltonian(0.8 * q + 0.15 * np.sin(q), n)


def small_fixtures() -> dict[str, PlantedGraph]:
    return {
        "K4_planted": complete_graph(4, range(4)),
        "G10_k3_s11": generate(10, 3, 11),
        "G12_k4_s5": generate(12, 4, 5),
        "G14_k3_s7": generate(14, 3, 7),
    }


def brute_force_census(g: PlantedGraph) -> np.ndarray:
    """W[q, r] by testing every vertex subset; independent of the DFS enumerator."""
    n = g.n
    counts = np.zeros((n + 1, n + 1), dtype=np.int64)
    rows = g.row_bits
    planted = g.planted.bits
    for bits in range(1 << n):
        ok = True
        b = bits
        while b:
            v = (b & -b).bit_length() - 1
            b &= b - 1
            if (bits & ~(1 << v)) & ~rows[v]:
                ok = False
                break
        if ok:
            counts[bits.bit_count(), (bits & planted).bit_count()] += 1
    return counts


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}: {self.detail}"


def check_detailed_balance(fixtures: dict[str, PlantedGraph]) -> list[CheckResult]:
    out = []
    for name, g in fixtures.items():
        idx = exact.enumerate_cliques(g)
        for hname, h in (("identity", identity_hamiltonian(g.n)), ("wavy", wavy_hamiltonian(g.n))):
            for beta in (0.0, 1.0, math.log(g.n)):
                ctx = GibbsWeightContext(beta, h)
                res = exact.exact_stationary_and_balance(idx, g, ctx)
                err = float(np.abs(res.pi - exact.gibbs_distribution(idx, ctx)).max())
                ok = res.residual <= 1e-12 and err <= 1e-10
                out.append(CheckResult(
                    f"balance {name} h={hname} beta={beta:.4g}", ok,
                    f"residual={res.residual:.2e} gibbs_err={err:.2e}" + (" degenerate" if res.degenerate else ""),
                ))
    return out


def check_census(fixtures: dict[str, PlantedGraph]) -> list[CheckResult]:
    out = []
    for name, g in fixtures.items():
        c = exact.census(exact.enumerate_cliques(g), g).counts
        bf = brute_force_census(g)
        padded = np.zeros_like(bf)
        padded[: c.shape[0], : c.shape[1]] = c
        out.append(CheckResult(f"census {name}", bool(np.array_equal(padded, bf)), f"{int(bf.sum())} cliques"))
    return out


def check_dominance() -> list[CheckResult]:
    out = []
    cases = {"K16": complete_graph(16), "G64_k8_s3": generate(64, 8, 3)}
    for name, g in cases.items():
        ctx = GibbsWeightContext(0.0, identity_hamiltonian(g.n))
        rep = chains.check_dominance(g, ctx, 0.5, chains.CliqueState.empty(g), 2000, 5, seed=1)
        ok = rep.violations == 0 and rep.precondition_failures == 0
        out.append(CheckResult(f"dominance {name}", ok, f"{rep.status} violations={rep.violations}"))
    return out


def check_birth_death() -> list[CheckResult]:
    out = []
    n, eta = 64, 0.5
    ctx = GibbsWeightContext(1.0, identity_hamiltonian(n))
    P = exact.birth_death_1d_matrix(n, ctx, eta)
    ceiling = 3
    nu = analytics.bd_stationary(ctx, eta, n)
    sub = P[: ceiling + 1, : ceiling + 1]
    eig = exact.stationary_eigen(sub)
    err = float(np.abs(eig - nu[: ceiling + 1]).max())
    out.append(CheckResult("birth-death 1D closed form vs eigen", err < 1e-10, f"max_err={err:.2e}"))
    n2 = 32
    h = identity_hamiltonian(n2)
    ladder = TemperingLadder([0.0, 0.5, 1.0], [0.0, 1.0, 2.5], h)
    table = analytics.st_2d_stationary_table(n2, ladder, eta)
    c2 = int(math.floor(0.5 * math.log2(n2) + 1e-9))
    m1 = ladder.m + 1
    P2 = exact.birth_death_2d_matrix(n2, ladder, eta)[: (c2 + 1) * m1, : (c2 + 1) * m1]
    eig2 = exact.stationary_eigen(P2).reshape(c2 + 1, m1)
    err2 = float(np.abs(eig2 - table[: c2 + 1]).max())
    out.append(CheckResult("birth-death 2D closed form vs eigen", err2 < 1e-8, f"max_err={err2:.2e}"))
    kol = exact.kolmogorov_cycle_residual(n2, ladder, eta)
    out.append(CheckResult("birth-death 2D Kolmogorov cycles", kol < 1e-12, f"max_diff={kol:.2e}"))
    return out


def verify_small() -> list[CheckResult]:
    fx = small_fixtures()
    return check_detailed_balance(fx) + check_census(fx) + check_dominance() + check_birth_death()


def all_subsets(n: int):
    for r in range(n + 1):
        yield from itertools.combinations(range(n), r)


def as_vertex_set(n: int, members) -> VertexSet:
    return VertexSet.of(n, members)
