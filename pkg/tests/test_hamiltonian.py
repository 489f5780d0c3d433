import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import logsumexp

from cliquemc import hamiltonian as hm
from cliquemc.errors import InvalidParameterError


def test_identity_values_and_kind():
    h = hm.identity_hamiltonian(5)
    assert h.values.tolist() == [0, 1, 2, 3, 4, 5]
    assert h.kind is hm.HamiltonianKind.IDENTITY
    assert hm.GibbsWeightContext(2.0, h).log_weight(3) == 6.0


@given(st.integers(1, 5000))
def test_identity_always_regular(n):
    assert hm.check_regular(hm.identity_hamiltonian(n), n).ok


def test_window():
    assert hm.lipschitz_window(1024) == 21
    assert hm.lipschitz_window(4) == 4
    assert hm.lipschitz_window(2) == 2


def test_check_regular_examples():
    n = 16
    steep = hm.custom_hamiltonian([0, 2] + list(range(2, n + 1)), n)
    assert hm.check_regular(steep, n) == (False, (0, 1), "Lipschitz bound violated")
    shifted = hm.custom_hamiltonian([1.0] * (n + 1), n)
    r = hm.check_regular(shifted, n)
    assert not r.ok and r.pair == (0, 0)


def test_check_regular_length_mismatch():
    with pytest.raises(InvalidParameterError):
        hm.check_regular(hm.identity_hamiltonian(4), 5)


def test_violation_outside_window_is_ignored():
    n = 8  # window = floor(2.1 * 3) = 6
    vals = list(range(n + 1))
    vals[8] = 50
    assert hm.check_regular(hm.custom_hamiltonian(vals, n), n).ok


@given(n=st.integers(2, 40), steps=st.lists(st.floats(-1.5, 1.5), min_size=40, max_size=40))
def test_first_violating_pair_matches_scan(n, steps):
    vals = np.concatenate([[0.0], np.cumsum(steps[:n])])
    h = hm.custom_hamiltonian(vals, n)
    w = hm.lipschitz_window(n)
    want = None
    for q in range(w + 1):
        for q2 in range(q + 1, w + 1):
            if abs(vals[q] - vals[q2]) > (q2 - q) + 1e-12:
                want = (q, q2)
                break
        if want:
            break
    r = hm.check_regular(h, n)
    assert r.ok == (want is None)
    assert r.pair == want


def test_custom_validation():
    with pytest.raises(InvalidParameterError):
        hm.custom_hamiltonian([0, float("nan")])
    with pytest.raises(InvalidParameterError):
        hm.custom_hamiltonian([0, 1, 2], n=3)
    h = hm.custom_hamiltonian([0, 1, 2])
    with pytest.raises(ValueError):
        h.values[0] = 3


def test_log_acceptance_examples():
    h = hm.identity_hamiltonian(6)
    assert hm.log_acceptance(hm.GibbsWeightContext(0.0, h), 3, 4) == 0
    ctx = hm.GibbsWeightContext(1.0, h)
    assert hm.log_acceptance(ctx, 3, 2) == -1
    assert hm.log_acceptance(ctx, 2, 3) == 0
    with pytest.raises(InvalidParameterError):
        hm.log_acceptance(ctx, 2, 4)
    with pytest.raises(InvalidParameterError):
        hm.log_acceptance(ctx, 6, 7)


def test_infinite_beta_rejected():
    with pytest.raises(InvalidParameterError):
        hm.GibbsWeightContext(math.inf, hm.identity_hamiltonian(3))


@given(
    beta=st.floats(-50, 50),
    vals=st.lists(st.floats(-20, 20), min_size=2, max_size=30),
    data=st.data(),
)
def test_size_factor_detailed_balance(beta, vals, data):
    vals[0] = 0.0
    h = hm.custom_hamiltonian(vals)
    ctx = hm.GibbsWeightContext(beta, h)
    a = data.draw(st.integers(0, h.n - 1))
    b = a + 1
    lhs = hm.log_acceptance(ctx, a, b) + beta * h[a]
    rhs = hm.log_acceptance(ctx, b, a) + beta * h[b]
    assert lhs == pytest.approx(rhs, abs=1e-12, rel=1e-12)


@given(st.lists(st.floats(-300, 300), min_size=1, max_size=50), st.randoms())
def test_log_partition_permutation_invariant(lw, rnd):
    a = hm.log_partition(np.array(lw))
    perm = list(lw)
    rnd.shuffle(perm)
    b = hm.log_partition(np.array(perm))
    assert b == pytest.approx(a, rel=1e-12, abs=1e-12)


def test_log_partition_with_counts():
    assert hm.log_partition(np.array([0.0, math.log(2)]), np.array([3, 2])) == pytest.approx(math.log(7))
    assert hm.log_partition(np.array([1.0]), np.array([0])) == -math.inf


def test_ladder_validation():
    h = hm.identity_hamiltonian(4)
    with pytest.raises(InvalidParameterError):
        hm.TemperingLadder([1.0, 0.5], [0, 1], h)
    with pytest.raises(InvalidParameterError):
        hm.TemperingLadder([0.0, 1.0], [0.0], h)
    with pytest.raises(InvalidParameterError):
        hm.TemperingLadder([0.0, 1.0], [0.0, math.inf], h)
    with pytest.raises(InvalidParameterError):
        hm.TemperingLadder([0.0, 1.0], [0.0, 1.0], h, level_move_prob=1.0)
    with pytest.warns(UserWarning):
        hm.TemperingLadder([0.0, 1.0], [2.0, 1.0], h)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        lad = hm.TemperingLadder([0.0, 1.0], [1.0, 2.0], h)
    assert lad.m == 1 and lad.level_move_prob == 0.5


def test_temperature_acceptance_from_empty_clique():
    h = hm.identity_hamiltonian(5)
    lad = hm.TemperingLadder([0.0, 0.7, 1.3], [0.0, 0.4, 1.1], h)
    assert lad.log_temperature_acceptance(1, 2, 0) == pytest.approx(min(0.0, 0.4 - 1.1))
    assert lad.log_temperature_acceptance(1, 0, 0) == pytest.approx(min(0.0, 0.4 - 0.0))
    assert lad.log_temperature_acceptance(0, -1, 3) == -math.inf
    assert lad.log_temperature_acceptance(2, 3, 3) == -math.inf
    # size 3: log(Z_1/Z_2) + (1.3 - 0.7) * 3
    assert lad.log_temperature_acceptance(1, 2, 3) == pytest.approx(min(0.0, -0.7 + 1.8))


def test_monotone():
    assert hm.identity_hamiltonian(3).is_monotone()
    assert not hm.custom_hamiltonian([0, 1, 0.5]).is_monotone()
