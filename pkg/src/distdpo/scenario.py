"""Build a synthetic federation (instance + client datasets) from plain configs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dpo import DpoConfig
from .env import Instance, make_random_instance
from .preference import HeterogeneityConfig, generate_client_dataset
from .problem import DpoProblem
from .rng import stream


@dataclass(frozen=True)
class InstanceConfig:
    num_states: int = 5
    num_actions: int = 4
    horizon: int = 5
    feature_dim: int = 8
    phi_bound: float = 1.0

    def __post_init__(self):
        for name in ("num_states", "num_actions", "horizon", "feature_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive count")
        if not self.phi_bound > 0:
            raise ValueError("phi_bound must be positive")


@dataclass(frozen=True)
class DataConfig:
    """Synthetic preference data.

    ``base_weights`` is a random direction of norm ``reward_scale`` drawn from
    the data seed; each client perturbs it by ``perturbation_scale`` along its
    own random unit direction.
    """

    pairs_per_client: int = 120
    reward_scale: float = 2.0
    perturbation_scale: float = 4.0
    seed: int = 0
    behavior_scale: float = 0.0  # behaviour policy is behavior_scale * random unit vector

    def __post_init__(self):
        if self.pairs_per_client < 1:
            raise ValueError("pairs_per_client must be positive")
        if self.reward_scale < 0 or self.perturbation_scale < 0 or self.behavior_scale < 0:
            raise ValueError("reward_scale, perturbation_scale and behavior_scale must be nonnegative")


def build_instance(cfg: InstanceConfig, seed: int) -> Instance:
    return make_random_instance(
        cfg.num_states, cfg.num_actions, cfg.horizon, cfg.feature_dim, stream(seed, "instance"), cfg.phi_bound
    )


def _unit(rng, d):
    v = rng.standard_normal(d)
    return v / np.linalg.norm(v)


def heterogeneity(data: DataConfig, d: int) -> HeterogeneityConfig:
    base = data.reward_scale * _unit(stream(data.seed, "base_weights"), d)
    return HeterogeneityConfig(base, data.perturbation_scale, data.pairs_per_client)


def behavior_theta(data: DataConfig, d: int) -> np.ndarray:
    if data.behavior_scale == 0:
        return np.zeros(d)
    return data.behavior_scale * _unit(stream(data.seed, "behavior"), d)


def build_clients(inst: Instance, data: DataConfig, num_clients: int, identical: bool = False):
    """Client datasets; ``identical`` gives every client client 0's data."""
    d = inst.spec.feature_dim
    het = heterogeneity(data, d)
    beh = behavior_theta(data, d)
    out = []
    for i in range(num_clients):
        src = 0 if identical else i
        ds = generate_client_dataset(inst, beh, het, src, stream(data.seed, "client", src))
        out.append(ds if ds.client_id == i else type(ds)(i, ds.data, ds.reward_weights))
    return out


def build_problem(inst_cfg: InstanceConfig, data: DataConfig, num_clients: int, dpo: DpoConfig | None = None, identical=False):
    inst = build_instance(inst_cfg, data.seed)
    clients = build_clients(inst, data, num_clients, identical)
    return DpoProblem(inst, clients, dpo or DpoConfig())
