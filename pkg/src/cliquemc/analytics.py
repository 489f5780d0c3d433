"""Exact finite-n evaluations of first-moment and birth-death closed forms.

Every function works in natural-log space through ``gammaln`` so that the same
code covers n = 4 and n = 2**40.  Nothing here drops lower-order terms except
:func:`asymptotic_exponent`, which is the leading-order exponent only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import InvalidParameterError
from .graph_model import log2_size_ceiling
from .hamiltonian import GibbsWeightContext, TemperingLadder

LN2 = math.log(2.0)
LOG20 = math.log(20.0)


_DIRECT_SUM_LIMIT = 4096


def log_binom(n: int, k: int) -> float:
    """log C(n, k); -inf outside 0 <= k <= n.

    Small ``min(k, n - k)`` sums logs of the falling factorial exactly, which
    avoids the cancellation of log-gamma differences at n ~ 2**40 and accepts
    arbitrarily large Python integers.
    """
    if k < 0 or k > n or n < 0:
        return -math.inf
    j = min(k, n - k)
    if j <= _DIRECT_SUM_LIMIT:
        return math.fsum(math.log(n - i) for i in range(j)) - math.lgamma(j + 1)
    return float(gammaln(float(n) + 1) - gammaln(float(k) + 1) - gammaln(float(n - k) + 1))


def expected_census(n: int, k: int, q: int, r: int) -> float:
    """log E[W_{q,r}] = log[C(k,r) C(n-k,q-r) 2^(C(r,2) - C(q,2))] in G(n, 1/2, k)."""
    if not (0 <= k <= n and 0 <= q <= n and 0 <= r <= min(q, k)):
        raise InvalidParameterError(f"need 0 <= r <= min(q, k), q <= n; got n={n} k={k} q={q} r={r}")
    return (
        log_binom(k, r)
        + log_binom(n - k, q - r)
        + LN2 * (r * (r - 1) / 2 - q * (q - 1) / 2)
    )


def expected_census_table(n: int, k: int, max_q: int | None = None) -> np.ndarray:
    """Array ``T[q, r] = log E[W_{q,r}]`` (-inf where undefined)."""
    max_q = n if max_q is None else min(max_q, n)
    out = np.full((max_q + 1, max_q + 1), -np.inf)
    for q in range(max_q + 1):
        for r in range(min(q, k) + 1):
            out[q, r] = expected_census(n, k, q, r)
    return out


def asymptotic_exponent(alpha: float, rho: float, gamma: float) -> float:
    """(ln 2)(rho - rho^2/2 - (1 - alpha) gamma + gamma^2/2).

    Leading-order coefficient of (log2 n)^2 in log E[W_{q,r}] for
    q = rho log2 n, r = gamma log2 n, k = n^alpha.
    """
    if not 0 <= gamma <= rho:
        raise InvalidParameterError("need 0 <= gamma <= rho")
    return LN2 * (rho - rho**2 / 2 - (1 - alpha) * gamma + gamma**2 / 2)


@dataclass(frozen=True)
class GatewayMoment:
    log_value: float
    feasible: bool


def gateway_first_moment(n: int, k: int, q: int, p: int, u: int) -> GatewayMoment:
    """log E[X] for the (C, U, W) tuple count bounding |Psi_q ∩ Omega_{p,<=u}|.

    E[X] = sum_{r<=u} C(k,r) C(n-k,p-r) C(n-p,q-p) C(p-r,2p-q-u)
           * 2^-(C(p,2) - C(r,2) + (q-p)(2p-q-u)).
    """
    if p > q:
        raise InvalidParameterError("need p <= q")
    w = 2 * p - q - u
    if w < 0:
        return GatewayMoment(-math.inf, False)
    terms = []
    for r in range(0, min(u, k, p) + 1):
        t = (
            log_binom(k, r)
            + log_binom(n - k, p - r)
            + log_binom(n - p, q - p)
            + log_binom(p - r, w)
            - LN2 * (p * (p - 1) / 2 - r * (r - 1) / 2 + (q - p) * w)
        )
        terms.append(t)
    if not terms:
        return GatewayMoment(-math.inf, True)
    return GatewayMoment(float(logsumexp(terms)), True)


# --- birth-death comparison chains ---------------------------------------


def _log_up(ctx: GibbsWeightContext, s: int) -> float:
    """log P(s, s+1) without the ceiling cut: -log(20 2^s) + min(0, beta dh)."""
    dh = ctx.beta * (ctx.h.values[s + 1] - ctx.h.values[s])
    return -LOG20 - s * LN2 + min(0.0, dh)


def _log_down(ctx: GibbsWeightContext, n: int, s: int) -> float:
    dh = ctx.beta * (ctx.h.values[s - 1] - ctx.h.values[s])
    return math.log(s / n) + min(0.0, dh)


def bd_stationary_ratio(ctx: GibbsWeightContext, eta: float, n: int, p: int, q: int) -> float:
    """log nu(p) - log nu(q) for the 1D comparison chain, p <= q <= ceiling.

    Closed form: 20^(q-p) (q!/p!) 2^(C(q,2) - C(p,2)) n^-(q-p) exp[beta (h_p - h_q)].
    """
    ceiling = log2_size_ceiling(n, eta)
    if not 0 <= p <= q:
        raise InvalidParameterError("need 0 <= p <= q")
    if q > ceiling:
        raise InvalidParameterError(f"q={q} exceeds the birth-death ceiling {ceiling}")
    h = ctx.h.values
    return (
        (q - p) * LOG20
        + float(gammaln(q + 1) - gammaln(p + 1))
        + LN2 * (q * (q - 1) / 2 - p * (p - 1) / 2)
        - (q - p) * math.log(n)
        + ctx.beta * (h[p] - h[q])
    )


def bd_stationary_product(ctx: GibbsWeightContext, eta: float, n: int) -> np.ndarray:
    """Unnormalised log nu(i) = sum_{s=1}^{i} log(p_{s-1} / q_s) on [0, ceiling]."""
    ceiling = log2_size_ceiling(n, eta)
    out = np.zeros(ceiling + 1)
    for s in range(1, ceiling + 1):
        out[s] = out[s - 1] + _log_up(ctx, s - 1) - _log_down(ctx, n, s)
    return out


def bd_stationary(ctx: GibbsWeightContext, eta: float, n: int) -> np.ndarray:
    """Normalised stationary law of the 1D chain on states 0..n (zero above the ceiling)."""
    if not 0 < eta < 1:
        raise InvalidParameterError("eta must lie in (0, 1)")
    logs = bd_stationary_product(ctx, eta, n)
    out = np.zeros(n + 1)
    out[: logs.size] = np.exp(logs - logsumexp(logs))
    return out


def st_2d_log_weight(n: int, ladder: TemperingLadder, s: int, j: int) -> float:
    """Unnormalised log nu((s, j)) of the 2D comparison walk.

    log nu = s log n - s log 20 - log s! - C(s,2) log 2 + beta_j h_s - log Z_hat_j,
    i.e. detailed balance of the walk's own kernel along size then temperature.
    """
    h = ladder.h.values
    return (
        s * math.log(n)
        - s * LOG20
        - float(gammaln(s + 1))
        - LN2 * s * (s - 1) / 2
        + ladder.betas[j] * h[s]
        - ladder.log_z_hat[j]
    )


def st_2d_stationary_table(n: int, ladder: TemperingLadder, eta: float) -> np.ndarray:
    """Normalised ``nu[s, j]`` over s in 0..n, j in 0..m (zero above the ceiling)."""
    if not ladder.h.is_monotone():
        raise InvalidParameterError("the 2D walk's stationary law needs a monotone Hamiltonian")
    ceiling = log2_size_ceiling(n, eta)
    logs = np.array(
        [[st_2d_log_weight(n, ladder, s, j) for j in range(ladder.m + 1)] for s in range(ceiling + 1)]
    )
    out = np.zeros((n + 1, ladder.m + 1))
    out[: ceiling + 1] = np.exp(logs - logsumexp(logs))
    return out


def st_2d_stationary(n: int, m: int, ladder: TemperingLadder, eta: float, s: int, j: int) -> float:
    """Normalised log nu((s, j)) of the 2D comparison walk."""
    if m != ladder.m:
        raise InvalidParameterError(f"ladder has m={ladder.m}, got m={m}")
    if not ladder.h.is_monotone():
        raise InvalidParameterError("the 2D walk's stationary law needs a monotone Hamiltonian")
    ceiling = log2_size_ceiling(n, eta)
    if not 0 <= s <= ceiling:
        raise InvalidParameterError(f"s={s} outside [0, {ceiling}]")
    if not 0 <= j <= m:
        raise InvalidParameterError(f"j={j} outside [0, {m}]")
    grid = [st_2d_log_weight(n, ladder, s2, j2) for s2 in range(ceiling + 1) for j2 in range(m + 1)]
    return st_2d_log_weight(n, ladder, s, j) - float(logsumexp(grid))
