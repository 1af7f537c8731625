import numpy as np
import pytest
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from lumenforge.maxflow import FlowNetwork, InfeasibleCutError


def test_textbook_network():
    # CLRS figure 26.1: max flow 23
    net = FlowNetwork(4)
    s, t = 4, 5
    edges = [(s, 0, 16), (s, 1, 13), (0, 2, 12), (1, 0, 4), (1, 3, 14), (2, 1, 9), (2, t, 20), (3, 2, 7), (3, t, 4)]
    for u, v, c in edges:
        if u == s:
            net.add_terminal(v, source_cap=c)
        elif v == t:
            net.add_terminal(u, sink_cap=c)
        else:
            net.add_edge(u, v, c)
    assert net.max_flow() == 23
    assert list(net.source_side()) == [True, True, False, True]


@pytest.mark.parametrize("seed", range(25))
def test_matches_scipy_on_random_graphs(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 12))
    cap = np.zeros((n + 2, n + 2), np.int32)
    net = FlowNetwork(n)
    for _ in range(int(rng.integers(n, 4 * n))):
        u, v = rng.integers(0, n, 2)
        if u == v:
            continue
        c, rc = rng.integers(0, 20, 2)
        net.add_edge(int(u), int(v), float(c), float(rc))
        cap[u, v] += c
        cap[v, u] += rc
    for v in range(n):
        a, b = rng.integers(0, 15, 2) * (rng.random(2) < 0.5)
        net.add_terminal(v, float(a), float(b))
        cap[n, v] += a
        cap[v, n + 1] += b
    ref = maximum_flow(csr_matrix(cap), n, n + 1).flow_value
    assert net.max_flow() == pytest.approx(ref, abs=1e-9)
    # the reported side is a cut of the same value
    side = np.append(net.source_side(), [True, False])
    assert cap[side][:, ~side].sum() == pytest.approx(ref)


def test_infinite_path_is_infeasible():
    net = FlowNetwork(2)
    net.add_terminal(0, source_cap=np.inf)
    net.add_terminal(1, sink_cap=np.inf)
    net.add_edge(0, 1, np.inf)
    with pytest.raises(InfeasibleCutError):
        net.max_flow()
    both = FlowNetwork(1)
    both.add_terminal(0, np.inf, np.inf)
    with pytest.raises(InfeasibleCutError):
        both.max_flow()


def test_negative_capacity_rejected():
    net = FlowNetwork(2)
    with pytest.raises(ValueError):
        net.add_edge(0, 1, -1.0)
    with pytest.raises(ValueError):
        net.add_terminal(0, -1.0)
