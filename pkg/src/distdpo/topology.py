"""Communication graphs and symmetric doubly stochastic mixing matrices."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

KINDS = ("path", "ring", "star", "complete")
SCHEMES = ("uniform_neighbor", "metropolis")


class DegenerateTopologyError(ValueError):
    """The mixing matrix does not contract towards consensus (rho >= 1)."""


@dataclass(frozen=True)
class Graph:
    n: int
    edges: frozenset  # of (i, j) with i < j

    @property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = True
        return adj

    def is_connected(self) -> bool:
        adj = self.adjacency()
        seen = {0}
        frontier = [0]
        while frontier:
            i = frontier.pop()
            for j in np.flatnonzero(adj[i]):
                if j not in seen:
                    seen.add(int(j))
                    frontier.append(int(j))
        return len(seen) == self.n


def _edge(i, j):
    if i == j:
        raise ValueError("self-loops are not stored")
    return (min(i, j), max(i, j))


def build_graph(kind: str, n: int) -> Graph:
    if kind not in KINDS:
        raise ValueError(f"unknown topology {kind!r}; expected one of {KINDS}")
    if n < 2 or (kind == "ring" and n < 3):
        raise ValueError(f"{kind} graph needs more nodes than {n}")
    if kind == "path":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "ring":
        edges = [_edge(i, (i + 1) % n) for i in range(n)]
    elif kind == "star":
        edges = [(0, j) for j in range(1, n)]
    else:
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return Graph(n, frozenset(edges))


@dataclass(frozen=True)
class MixingMatrix:
    n: int
    weights: np.ndarray
    rho: float

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=float)
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)


def spectral_rho(weights) -> float:
    """``|| W - 11^T / n ||_2`` via a symmetric eigendecomposition.

    Raises :class:`DegenerateTopologyError` when the result is not below one.
    """
    W = np.asarray(weights.weights if isinstance(weights, MixingMatrix) else weights, dtype=float)
    n = W.shape[0]
    shifted = W - np.full((n, n), 1.0 / n)
    rho = float(np.abs(np.linalg.eigvalsh((shifted + shifted.T) / 2)).max())
    if rho >= 1.0 - 1e-12:
        raise DegenerateTopologyError(f"rho = {rho:.6f}; graph is disconnected or mixing is periodic")
    return rho


def build_mixing(graph: Graph, scheme: str | None = None) -> MixingMatrix:
    """Mixing weights on ``graph``.

    ``uniform_neighbor`` puts ``1/(deg+1)`` on the closed neighbourhood and is
    only doubly stochastic on regular graphs.  ``metropolis`` uses
    ``1/(1 + max(deg_i, deg_j))`` on edges and the remainder on the diagonal.
    ``None`` picks uniform for regular graphs and Metropolis otherwise.
    """
    if not graph.is_connected():
        raise DegenerateTopologyError("graph is not connected")
    deg = graph.degrees
    regular = bool(np.all(deg == deg[0]))
    if scheme is None:
        scheme = "uniform_neighbor" if regular else "metropolis"
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    n = graph.n
    W = np.zeros((n, n))
    if scheme == "uniform_neighbor":
        if not regular:
            raise ValueError("uniform_neighbor weights need a regular graph")
        w = 1.0 / (deg[0] + 1)
        for i, j in graph.edges:
            W[i, j] = W[j, i] = w
        np.fill_diagonal(W, w)
    else:
        for i, j in graph.edges:
            W[i, j] = W[j, i] = 1.0 / (1 + max(deg[i], deg[j]))
        np.fill_diagonal(W, 1.0 - W.sum(axis=1))
    return MixingMatrix(n, W, spectral_rho(W))


def topology(kind: str, n: int, scheme: str | None = None) -> MixingMatrix:
    return build_mixing(build_graph(kind, n), scheme)


def mixing_to_dict(m: MixingMatrix) -> dict:
    return {"n": m.n, "weights": m.weights.tolist(), "rho": m.rho}


def mixing_from_dict(doc: dict) -> MixingMatrix:
    W = np.array(doc["weights"], dtype=float)
    return MixingMatrix(int(doc["n"]), W, spectral_rho(W))


def dump_mixing(m: MixingMatrix, path) -> None:
    with open(path, "w") as fh:
        json.dump(mixing_to_dict(m), fh)
