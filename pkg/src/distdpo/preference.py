"""Bradley-Terry labelled trajectory pairs and their split across clients.

Each client owns a latent linear reward ``w_i``; the return of a trajectory is
``sum_h w_i . phi(s_h, u_h)``.  Two behaviour-policy rollouts are compared and
the first is labelled preferred with probability ``sigmoid(R_a - R_b)``.
Heterogeneity comes from perturbing a shared ``w*`` per client.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .env import FeatureTable, Instance, Trajectory, sample_trajectories


@dataclass(frozen=True)
class PreferencePair:
    plus: Trajectory
    minus: Trajectory


class PairBatch(NamedTuple):
    """Column-wise storage of ``n`` pairs; each array has shape (n, H)."""

    plus_states: np.ndarray
    plus_actions: np.ndarray
    minus_states: np.ndarray
    minus_actions: np.ndarray

    def __len__(self):
        return self.plus_states.shape[0]

    def pair(self, j: int) -> PreferencePair:
        return PreferencePair(
            Trajectory(self.plus_states[j], self.plus_actions[j]),
            Trajectory(self.minus_states[j], self.minus_actions[j]),
        )

    def take(self, idx) -> "PairBatch":
        return PairBatch(*(a[idx] for a in self))

    @classmethod
    def from_pairs(cls, pairs) -> "PairBatch":
        pairs = list(pairs)
        if not pairs:
            raise ValueError("no pairs given")
        return cls(
            np.stack([p.plus.states for p in pairs]),
            np.stack([p.plus.actions for p in pairs]),
            np.stack([p.minus.states for p in pairs]),
            np.stack([p.minus.actions for p in pairs]),
        )


def as_batch(pairs) -> PairBatch:
    if isinstance(pairs, PairBatch):
        return pairs
    if isinstance(pairs, PreferencePair):
        return PairBatch.from_pairs([pairs])
    return PairBatch.from_pairs(pairs)


@dataclass(frozen=True)
class HeterogeneityConfig:
    base_weights: np.ndarray
    perturbation_scale: float = 0.0
    pairs_per_client: int = 120

    def __post_init__(self):
        object.__setattr__(self, "base_weights", np.asarray(self.base_weights, dtype=float))
        if self.perturbation_scale < 0:
            raise ValueError("perturbation_scale must be nonnegative")
        if self.pairs_per_client < 1:
            raise ValueError("pairs_per_client must be positive")


@dataclass(frozen=True)
class ClientDataset:
    client_id: int
    data: PairBatch
    reward_weights: np.ndarray

    def __post_init__(self):
        if len(self.data) < 1:
            raise ValueError("a client needs at least one pair")

    @property
    def size(self) -> int:
        return len(self.data)

    @property
    def pairs(self) -> list[PreferencePair]:
        return [self.data.pair(j) for j in range(self.size)]


def trajectory_return(feats: FeatureTable, weights, traj: Trajectory) -> float:
    w = np.asarray(weights, dtype=float)
    if w.shape != (feats.shape[2],):
        raise ValueError("weight dimension does not match features")
    return float((feats.phi[traj.states, traj.actions] @ w).sum())


def batch_returns(feats: FeatureTable, weights, states, actions) -> np.ndarray:
    return (feats.phi[states, actions] @ np.asarray(weights, dtype=float)).sum(axis=-1)


def generate_client_dataset(inst: Instance, behavior_theta, cfg: HeterogeneityConfig, client_id: int, rng) -> ClientDataset:
    """Sample ``cfg.pairs_per_client`` BT-labelled pairs for one client.

    ``rng`` should be this client's own stream; the perturbation direction,
    the rollouts and the labels are all drawn from it in that order.
    """
    d = inst.spec.feature_dim
    if cfg.base_weights.shape != (d,):
        raise ValueError("base_weights dimension does not match features")
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    w = cfg.base_weights + cfg.perturbation_scale * direction

    n = cfg.pairs_per_client
    states, actions = sample_trajectories(inst.spec, inst.feats, behavior_theta, 2 * n, rng)
    sa, aa, sb, ab = states[:n], actions[:n], states[n:], actions[n:]
    gap = batch_returns(inst.feats, w, sa, aa) - batch_returns(inst.feats, w, sb, ab)
    a_wins = rng.random(n) < expit(gap)
    keep = a_wins[:, None]
    data = PairBatch(
        np.where(keep, sa, sb),
        np.where(keep, aa, ab),
        np.where(keep, sb, sa),
        np.where(keep, ab, aa),
    )
    return ClientDataset(int(client_id), data, w)


def sample_minibatch(ds: ClientDataset, batch_size: int, rng) -> PairBatch:
    """Uniform sampling with replacement."""
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if batch_size > ds.size:
        raise ValueError(f"batch_size {batch_size} exceeds dataset size {ds.size}")
    return ds.data.take(rng.integers(0, ds.size, size=batch_size))


def dump_pairs_jsonl(batch: PairBatch, path) -> None:
    with open(path, "w") as fh:
        for j in range(len(batch)):
            row = {
                "plus": np.stack([batch.plus_states[j], batch.plus_actions[j]], axis=1).tolist(),
                "minus": np.stack([batch.minus_states[j], batch.minus_actions[j]], axis=1).tolist(),
            }
            fh.write(json.dumps(row) + "\n")


def load_pairs_jsonl(path) -> PairBatch:
    pairs = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            plus = np.asarray(row["plus"], dtype=np.int64)
            minus = np.asarray(row["minus"], dtype=np.int64)
            pairs.append(PreferencePair(Trajectory(plus[:, 0], plus[:, 1]), Trajectory(minus[:, 0], minus[:, 1])))
    return PairBatch.from_pairs(pairs)
