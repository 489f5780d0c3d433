import numpy as np
import pytest
from hypothesis import settings

from cliquemc import exact, fixtures, graph_model

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_graphs():
    return fixtures.small_fixtures()


@pytest.fixture(scope="session")
def g12():
    return graph_model.generate(12, 4, 5)


@pytest.fixture(scope="session")
def idx12(g12):
    return exact.enumerate_cliques(g12)


@pytest.fixture(scope="session")
def g10():
    return graph_model.generate(10, 3, 11)


@pytest.fixture(scope="session")
def idx10(g10):
    return exact.enumerate_cliques(g10)


def brute_cliques(g):
    """All cliques as frozensets, by checking every subset pairwise (n <= 14)."""
    n = g.n
    adj = np.asarray(g.adjacency)
    out = []
    for bits in range(1 << n):
        members = [v for v in range(n) if bits >> v & 1]
        if all(adj[a, b] for i, a in enumerate(members) for b in members[i + 1:]):
            out.append(frozenset(members))
    return out
