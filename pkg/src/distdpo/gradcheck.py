"""Finite-difference check of the analytic DPO pair gradient on random instances."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .constants import finite_diff_gradient
from .dpo import DpoConfig, pair_gradient, pair_loss
from .env import make_random_instance, sample_trajectory
from .preference import PreferencePair
from .rng import stream


@dataclass(frozen=True)
class GradcheckCase:
    num_states: int
    num_actions: int
    horizon: int
    feature_dim: int
    rel_error: float


@dataclass(frozen=True)
class GradcheckResult:
    passed: bool
    max_rel_error: float
    tol: float
    step: float
    cases: list

    def to_dict(self) -> dict:
        return asdict(self)


def relative_error(analytic, numeric) -> float:
    analytic, numeric = np.asarray(analytic, float), np.asarray(numeric, float)
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / scale)


def random_case(rng, max_states=5, max_actions=5, max_horizon=6, max_dim=8):
    """A random small instance, parameter, reference and a pair of distinct trajectories."""
    S = int(rng.integers(2, max_states + 1))
    A = int(rng.integers(2, max_actions + 1))
    H = int(rng.integers(1, max_horizon + 1))
    d = int(rng.integers(1, max_dim + 1))
    inst = make_random_instance(S, A, H, d, rng)
    theta = rng.standard_normal(d)
    cfg = DpoConfig(beta=float(rng.uniform(0.05, 1.0)), ref_theta=0.5 * rng.standard_normal(d))
    sampler = 0.3 * rng.standard_normal(d)
    plus = sample_trajectory(inst.spec, inst.feats, sampler, rng)
    minus = sample_trajectory(inst.spec, inst.feats, sampler, rng)
    while np.array_equal(plus.states, minus.states) and np.array_equal(plus.actions, minus.actions):
        minus = sample_trajectory(inst.spec, inst.feats, sampler, rng)
    return inst, theta, cfg, PreferencePair(plus, minus)


def run_gradcheck(num_instances: int = 20, seed: int = 0, step: float = 1e-5, tol: float = 1e-6) -> GradcheckResult:
    cases = []
    for k in range(num_instances):
        inst, theta, cfg, pair = random_case(stream(seed, "gradcheck", k))
        spec, feats = inst.spec, inst.feats
        g = pair_gradient(spec, feats, theta, cfg, pair)
        fd = finite_diff_gradient(lambda t: pair_loss(spec, feats, t, cfg, pair), theta, step)
        cases.append(GradcheckCase(spec.num_states, spec.num_actions, spec.horizon, spec.feature_dim, relative_error(g, fd)))
    worst = max(c.rel_error for c in cases)
    return GradcheckResult(worst < tol, worst, tol, step, cases)
