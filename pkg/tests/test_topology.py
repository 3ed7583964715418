import json

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from distdpo.topology import (
    KINDS,
    DegenerateTopologyError,
    Graph,
    build_graph,
    build_mixing,
    dump_mixing,
    mixing_from_dict,
    mixing_to_dict,
    spectral_rho,
    topology,
)

RING5_RHO = (1 + 2 * np.cos(2 * np.pi / 5)) / 3


def test_graph_examples():
    assert len(build_graph("complete", 3).edges) == 3
    star = build_graph("star", 5)
    assert len(star.edges) == 4 and all(0 in e for e in star.edges)
    path = build_graph("path", 5)
    assert len(path.edges) == 4 and path.degrees.tolist() == [1, 2, 2, 2, 1]
    assert build_graph("ring", 5).degrees.tolist() == [2] * 5


def test_graph_argument_errors():
    with pytest.raises(ValueError):
        build_graph("ring", 2)
    with pytest.raises(ValueError):
        build_graph("path", 1)
    with pytest.raises(ValueError):
        build_graph("torus", 5)


def test_complete_uniform():
    m = build_mixing(build_graph("complete", 5), "uniform_neighbor")
    np.testing.assert_allclose(m.weights, 0.2, atol=1e-15)
    assert m.rho == pytest.approx(0.0, abs=1e-12)


def test_ring_uniform_rho():
    m = build_mixing(build_graph("ring", 5), "uniform_neighbor")
    adj = build_graph("ring", 5).adjacency() | np.eye(5, dtype=bool)
    np.testing.assert_allclose(m.weights[adj], 1 / 3, atol=1e-15)
    assert np.all(m.weights[~adj] == 0)
    assert m.rho == pytest.approx(RING5_RHO, abs=1e-12)
    assert m.rho == pytest.approx(0.5394, abs=1e-3)
    # independent oracle: singular values of the shifted matrix
    oracle = scipy.linalg.svdvals(m.weights - np.full((5, 5), 0.2)).max()
    assert abs(m.rho - oracle) < 1e-10


def test_uniform_needs_regular_graph():
    with pytest.raises(ValueError):
        build_mixing(build_graph("star", 5), "uniform_neighbor")


@pytest.mark.parametrize("kind", KINDS)
def test_metropolis_invariants(kind):
    g = build_graph(kind, 5)
    m = build_mixing(g, "metropolis")
    W = m.weights
    np.testing.assert_allclose(W, W.T, atol=1e-12)
    np.testing.assert_allclose(W.sum(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(W >= 0)
    allowed = g.adjacency() | np.eye(5, dtype=bool)
    assert np.all(W[~allowed] == 0)
    assert abs(m.rho - np.abs(np.linalg.eigvals(W - 0.2)).max()) < 1e-10


def test_rho_examples():
    assert spectral_rho(np.full((4, 4), 0.25)) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(DegenerateTopologyError):
        spectral_rho(np.eye(4))


def test_disconnected_graph_is_degenerate():
    with pytest.raises(DegenerateTopologyError):
        build_mixing(Graph(4, frozenset({(0, 1), (2, 3)})))


def test_rho_ordering_default_schemes():
    rho = {k: topology(k, 5).rho for k in KINDS}
    assert rho["complete"] < rho["ring"] < rho["path"]


def test_mixing_json_round_trip(tmp_path):
    m = topology("path", 5)
    path = tmp_path / "mix.json"
    dump_mixing(m, path)

    back = mixing_from_dict(json.loads(path.read_text()))
    np.testing.assert_array_equal(back.weights, m.weights)
    assert back.rho == m.rho
    assert mixing_to_dict(back)["n"] == 5


@settings(max_examples=25, deadline=None)
@given(kind=st.sampled_from(KINDS), seed=st.integers(0, 2**32 - 1), d=st.integers(1, 6))
def test_mixing_preserves_average_and_contracts(kind, seed, d):
    m = topology(kind, 5)
    rng = np.random.default_rng(seed)
    for _ in range(100):
        X = rng.standard_normal((5, d))
        np.testing.assert_allclose((m.weights @ X).mean(axis=0), X.mean(axis=0), atol=1e-12)
        E = X - X.mean(axis=0)
        assert np.linalg.norm(m.weights @ E) <= m.rho * np.linalg.norm(E) + 1e-10
