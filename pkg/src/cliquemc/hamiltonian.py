"""Size-indexed Hamiltonians h = (h_0, ..., h_n) and log-domain Gibbs weights."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import InvalidParameterError


class HamiltonianKind(str, Enum):
    IDENTITY = "identity"
    CUSTOM = "custom"


class Regularity(NamedTuple):
    ok: bool
    pair: tuple[int, int] | None
    reason: str


def lipschitz_window(n: int) -> int:
    """Largest size covered by the 1-Lipschitz condition: floor(2.1 log2 n), capped at n."""
    if n <= 1:
        return n
    return min(n, int(math.floor(2.1 * math.log2(n))))


@dataclass(frozen=True, eq=False)
class HamiltonianSpec:
    values: np.ndarray
    kind: HamiltonianKind = HamiltonianKind.CUSTOM

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size < 1:
            raise InvalidParameterError("Hamiltonian must be a non-empty vector")
        if not np.all(np.isfinite(vals)):
            raise InvalidParameterError("Hamiltonian entries must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.size - 1

    def __len__(self) -> int:
        return self.values.size

    def __getitem__(self, q):
        return self.values[q]

    def is_regular(self) -> bool:
        return check_regular(self, self.n).ok

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.values) >= 0))


def identity_hamiltonian(n: int) -> HamiltonianSpec:
    if n < 1:
        raise InvalidParameterError(f"n must be >= 1, got {n}")
    return HamiltonianSpec(np.arange(n + 1, dtype=np.float64), HamiltonianKind.IDENTITY)


def custom_hamiltonian(values: Sequence[float], n: int | None = None) -> HamiltonianSpec:
    h = HamiltonianSpec(np.asarray(values, dtype=np.float64), HamiltonianKind.CUSTOM)
    if n is not None and h.n != n:
        raise InvalidParameterError(f"Hamiltonian has length {len(h)}, expected {n + 1}")
    return h


def check_regular(h: HamiltonianSpec, n: int) -> Regularity:
    """h_0 = 0 and |h_q - h_q'| <= |q - q'| for q, q' <= floor(2.1 log2 n).

    On failure returns the lexicographically first violating pair ``(q, q')``
    with ``q < q'``; a nonzero h_0 is reported as pair ``(0, 0)``.
    """
    if len(h) != n + 1:
        raise InvalidParameterError(f"Hamiltonian has length {len(h)}, expected {n + 1}")
    if h.values[0] != 0:
        return Regularity(False, (0, 0), "h_0 != 0")
    w = lipschitz_window(n)
    v = h.values
    tol = 1e-12
    for q in range(w + 1):
        for q2 in range(q + 1, w + 1):
            if abs(v[q] - v[q2]) > (q2 - q) + tol:
                return Regularity(False, (q, q2), "Lipschitz bound violated")
    return Regularity(True, None, "")


@dataclass(frozen=True)
class GibbsWeightContext:
    """Inverse temperature plus Hamiltonian; log-weight of clique C is beta * h_|C|."""

    beta: float
    h: HamiltonianSpec

    def __post_init__(self):
        if math.isnan(self.beta) or math.isinf(self.beta):
            raise InvalidParameterError("beta must be finite (use the greedy dynamics for beta = inf)")

    def log_weight(self, size):
        return self.beta * self.h.values[size]

    def log_weights(self) -> np.ndarray:
        return self.beta * self.h.values


def log_acceptance(ctx: GibbsWeightContext, from_size: int, to_size: int) -> float:
    """log min{1, exp(beta (h_to - h_from))} for a single-vertex flip."""
    n = ctx.h.n
    if abs(from_size - to_size) != 1:
        raise InvalidParameterError("a move changes the clique size by exactly one")
    if not (0 <= from_size <= n and 0 <= to_size <= n):
        raise InvalidParameterError(f"sizes must lie in [0, {n}]")
    return min(0.0, ctx.beta * (ctx.h.values[to_size] - ctx.h.values[from_size]))


def log_partition(log_weights: np.ndarray, counts: np.ndarray | None = None) -> float:
    """log sum_i counts_i * exp(log_weights_i); zero counts contribute nothing."""
    lw = np.asarray(log_weights, dtype=np.float64)
    if counts is None:
        return float(logsumexp(lw)) if lw.size else -math.inf
    c = np.asarray(counts, dtype=np.float64)
    keep = c > 0
    if not np.any(keep):
        return -math.inf
    return float(logsumexp(lw[keep], b=c[keep]))


@dataclass(frozen=True, eq=False)
class TemperingLadder:
    """Inverse temperatures beta_0 < ... < beta_m with log partition estimates.

    ``level_move_prob`` is the probability ``a`` of a clique (level) move; the
    remaining ``1 - a`` proposes a temperature change.
    """

    betas: np.ndarray
    log_z_hat: np.ndarray
    h: HamiltonianSpec
    level_move_prob: float = 0.5

    def __post_init__(self):
        betas = np.array(self.betas, dtype=np.float64).ravel()
        logz = np.array(self.log_z_hat, dtype=np.float64).ravel()
        if betas.size < 1 or betas.size != logz.size:
            raise InvalidParameterError("ladder needs one log Z estimate per temperature")
        if np.any(np.diff(betas) <= 0):
            raise InvalidParameterError("ladder temperatures must be strictly increasing")
        if not (np.all(np.isfinite(betas)) and np.all(np.isfinite(logz))):
            raise InvalidParameterError("ladder entries must be finite")
        if not 0 < self.level_move_prob < 1:
            raise InvalidParameterError("level_move_prob must lie in (0, 1)")
        if np.any(np.diff(logz) <= 0):
            warnings.warn("partition estimates are not increasing along the ladder", stacklevel=2)
        betas.setflags(write=False)
        logz.setflags(write=False)
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "log_z_hat", logz)

    @property
    def m(self) -> int:
        return self.betas.size - 1

    def context(self, i: int) -> GibbsWeightContext:
        return GibbsWeightContext(float(self.betas[i]), self.h)

    def log_temperature_acceptance(self, i: int, j: int, size: int) -> float:
        """log min{1, (Z_hat_i / Z_hat_j) exp((beta_j - beta_i) h_size)}; -inf off the ladder."""
        if not 0 <= j <= self.m:
            return -math.inf
        x = self.log_z_hat[i] - self.log_z_hat[j] + (self.betas[j] - self.betas[i]) * self.h.values[size]
        return min(0.0, float(x))
