"""The per-client gradient oracle the distributed runtimes drive.

The runtimes only need ``num_clients``, ``dim``, ``client_sizes`` and the
four methods below, so any object with this surface can be plugged in (the
lower-bound quadratics do exactly that).
"""
from __future__ import annotations

import numpy as np

from .dpo import DpoConfig, batch_losses, batch_pair_gradients, reference_gaps
from .env import Instance
from .preference import ClientDataset


def objective_weights(sizes, weighting: str) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=float)
    if weighting == "uniform":
        return np.full(len(sizes), 1.0 / len(sizes))
    if weighting == "data_size":
        return sizes / sizes.sum()
    raise ValueError(f"unknown weighting {weighting!r}")


class DpoProblem:
    """DPO objectives of a federation of clients on one shared instance."""

    def __init__(self, inst: Instance, clients: list[ClientDataset], dpo: DpoConfig):
        if not clients:
            raise ValueError("need at least one client")
        self.inst = inst
        self.clients = list(clients)
        self.dpo = dpo
        self.dim = inst.spec.feature_dim
        self.num_clients = len(self.clients)
        self.client_sizes = np.array([c.size for c in self.clients])
        self._ref = [reference_gaps(inst.feats, dpo, c.data) for c in self.clients]

    def stochastic_gradient(self, i: int, theta, rng, batch_size: int) -> np.ndarray:
        c = self.clients[i]
        if not 1 <= batch_size <= c.size:
            raise ValueError(f"batch_size {batch_size} outside [1, {c.size}]")
        idx = rng.integers(0, c.size, size=batch_size)
        return batch_pair_gradients(self.inst.feats, theta, self.dpo, c.data.take(idx), self._ref[i][idx]).mean(axis=0)

    def client_gradient(self, i: int, theta) -> np.ndarray:
        return batch_pair_gradients(self.inst.feats, theta, self.dpo, self.clients[i].data, self._ref[i]).mean(axis=0)

    def client_loss(self, i: int, theta) -> float:
        return float(batch_losses(self.inst.feats, theta, self.dpo, self.clients[i].data, self._ref[i]).mean())

    def global_gradient(self, theta, weights) -> np.ndarray:
        return sum(w * self.client_gradient(i, theta) for i, w in enumerate(weights))

    def global_loss(self, theta, weights) -> float:
        return float(sum(w * self.client_loss(i, theta) for i, w in enumerate(weights)))
