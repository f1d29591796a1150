import numpy as np
import pytest

from core.errors import NetworkError
from core.network import (
    Network, WeightMatrix, community_sizes, diagnostics, gen_powerlaw, gen_sbm, powerlaw_pmf,
    row_normalize, sbm_probabilities,
)


def _cycle(n: int) -> Network:
    adj = np.zeros((n, n), dtype=int)
    adj[np.arange(n), (np.arange(n) + 1) % n] = 1
    return Network(adj)


# ─── NETWORK ───────────────────────────────────────────

def test_network_rejects_self_loop() -> None:
    with pytest.raises(NetworkError, match="Self-Loop an Knoten 1"):
        Network(np.array([[1, 0], [1, 0]]))


def test_network_rejects_non_square_and_weighted() -> None:
    with pytest.raises(NetworkError):
        Network(np.zeros((2, 3)))
    with pytest.raises(NetworkError):
        Network(np.array([[0, 2], [1, 0]]))


def test_network_is_read_only() -> None:
    net = _cycle(3)
    with pytest.raises(ValueError):
        net.adjacency[0, 2] = 1


def test_followees_and_followers() -> None:
    net = Network(np.array([[0, 1, 1], [0, 0, 1], [1, 0, 0]]))
    w = row_normalize(net)
    assert w.followees(0).tolist() == [1, 2]
    assert w.followers(2).tolist() == [0, 1]
    assert w.followers(1).tolist() == [0]
    assert net.out_degree.tolist() == [2, 1, 1]
    assert net.n_edges == 4


def test_row_normalize_rows_sum_to_one(net) -> None:
    w = row_normalize(net)
    assert np.allclose(w.weights.sum(axis=1), 1.0)
    assert np.all(np.diag(w.weights) == 0)
    i = 3
    expected = net.adjacency[i] / net.out_degree[i]
    assert np.allclose(w.weights[i], expected)


def test_row_normalize_rejects_isolated_node() -> None:
    net = Network(np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]]))
    with pytest.raises(NetworkError, match="Knoten 3 hat Out-Degree 0"):
        row_normalize(net)


# ─── GENERATOREN ──────────────────────────────────────

def test_community_sizes_give_remainder_to_first_blocks() -> None:
    assert community_sizes(10, 3).tolist() == [4, 3, 3]
    assert community_sizes(100, 5).tolist() == [20] * 5


def test_sbm_probabilities() -> None:
    p_in, p_out = sbm_probabilities(100)
    assert p_out == pytest.approx(np.log(100) / 100)
    assert p_in == pytest.approx(2 * p_out)


def test_gen_sbm_is_reproducible_and_valid() -> None:
    a = gen_sbm(60, 3, 42)
    b = gen_sbm(60, 3, 42)
    assert np.array_equal(a.adjacency, b.adjacency)
    assert np.all(np.diag(a.adjacency) == 0)
    assert a.out_degree.min() >= 1
    assert np.bincount(a.blocks).tolist() == [20, 20, 20]
    assert not np.array_equal(a.adjacency, gen_sbm(60, 3, 43).adjacency)


def test_gen_sbm_denser_within_blocks() -> None:
    net = gen_sbm(300, 3, 1)
    same = net.blocks[:, None] == net.blocks[None, :]
    np.fill_diagonal(same, False)
    other = net.blocks[:, None] != net.blocks[None, :]
    assert net.adjacency[same].mean() > 1.5 * net.adjacency[other].mean()


def test_gen_sbm_edge_density_matches_block_mixture() -> None:
    n, c = 300, 20
    sizes = community_sizes(n, c)
    p_in, p_out = sbm_probabilities(n)
    assert p_in == pytest.approx(0.0380, abs=1e-4)
    pairs = n * (n - 1)
    within = int((sizes * (sizes - 1)).sum())
    expected = (within * p_in + (pairs - within) * p_out) / pairs
    density = np.array([gen_sbm(n, c, seed).n_edges for seed in range(200)]) / pairs
    se = density.std(ddof=1) / np.sqrt(density.size)
    assert abs(density.mean() - expected) < 3 * se


def test_gen_sbm_rejects_more_blocks_than_nodes() -> None:
    with pytest.raises(NetworkError):
        gen_sbm(3, 5, 0)


def test_powerlaw_pmf() -> None:
    pmf = powerlaw_pmf(50)
    assert pmf.sum() == pytest.approx(1.0)
    assert np.all(np.diff(pmf) < 0)
    assert pmf[1] / pmf[0] == pytest.approx(2.0 ** -2.5)


def test_gen_powerlaw_degrees() -> None:
    net = gen_powerlaw(50, 3)
    in_degree = net.adjacency.sum(axis=0)
    assert in_degree.min() >= 4
    assert in_degree.max() <= 49
    assert net.out_degree.min() >= 1
    assert np.array_equal(net.adjacency, gen_powerlaw(50, 3).adjacency)


def test_gen_powerlaw_needs_five_nodes() -> None:
    with pytest.raises(NetworkError):
        gen_powerlaw(4, 0)


# ─── DIAGNOSTIK ───────────────────────────────────────

def test_diagnostics_on_directed_cycle() -> None:
    net = _cycle(4)
    diag = diagnostics(net, row_normalize(net))
    assert diag.converged
    assert diag.status == "ok"
    assert np.allclose(diag.stationary_dist, 0.25)
    assert diag.r_p == pytest.approx(0.25)
    assert diag.sigma_max_sym == pytest.approx(2.0, rel=1e-8)
    assert diag.mean_degree == 1.0
    assert diag.max_degree == 1
    assert diag.degree_q90 == 1.0


def test_diagnostics_on_complete_graph() -> None:
    adj = np.ones((5, 5), dtype=int) - np.eye(5, dtype=int)
    net = Network(adj)
    diag = diagnostics(net, row_normalize(net))
    assert diag.r_p == pytest.approx(0.2)
    assert diag.sigma_max_sym == pytest.approx(2.0, rel=1e-8)
    assert diag.to_dict()["max_degree"] == 4


def test_diagnostics_rejects_non_stochastic_weights() -> None:
    net = _cycle(3)
    with pytest.raises(NetworkError):
        diagnostics(net, WeightMatrix(np.zeros((3, 3))))
