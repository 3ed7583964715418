"""Tabular episodic MDP with a log-linear softmax policy.

The policy is ``pi(u|s) proportional to exp(theta . phi(s, u))`` over a finite
action set.  Trajectories are fixed-horizon arrays of state and action indices.
Everything here is vectorised over a batch of trajectories because the DPO
losses downstream are evaluated on whole datasets at once.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

ROW_TOL = 1e-12


class NumericDomainError(ArithmeticError):
    """Raised when policy logits are not finite."""


@dataclass(frozen=True)
class MdpSpec:
    num_states: int
    num_actions: int
    horizon: int
    transition: np.ndarray  # (S, A, S)
    initial_dist: np.ndarray  # (S,)
    feature_dim: int

    def __post_init__(self):
        for name in ("num_states", "num_actions", "horizon", "feature_dim"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive count")
        P = np.asarray(self.transition, dtype=float)
        mu = np.asarray(self.initial_dist, dtype=float)
        S, A = self.num_states, self.num_actions
        if P.shape != (S, A, S):
            raise ValueError(f"transition has shape {P.shape}, expected {(S, A, S)}")
        if mu.shape != (S,):
            raise ValueError(f"initial_dist has shape {mu.shape}, expected {(S,)}")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=-1) - 1.0) > ROW_TOL):
            raise ValueError("every transition row must be a probability distribution")
        if np.any(mu < 0) or abs(mu.sum() - 1.0) > ROW_TOL:
            raise ValueError("initial_dist must be a probability distribution")
        P.setflags(write=False)
        mu.setflags(write=False)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "initial_dist", mu)


@dataclass(frozen=True)
class FeatureTable:
    phi: np.ndarray  # (S, A, d)
    phi_bound: float = field(default=None)

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 3:
            raise ValueError("phi must have shape (num_states, num_actions, feature_dim)")
        if not np.all(np.isfinite(phi)):
            raise ValueError("phi must be finite")
        max_norm = float(np.linalg.norm(phi, axis=-1).max())
        bound = max_norm if self.phi_bound is None else float(self.phi_bound)
        if max_norm > bound * (1 + 1e-12):
            raise ValueError(f"feature norm {max_norm} exceeds phi_bound {bound}")
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "phi_bound", bound)

    @property
    def shape(self):
        return self.phi.shape


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.states, dtype=np.int64).reshape(-1)
        a = np.asarray(self.actions, dtype=np.int64).reshape(-1)
        if s.shape != a.shape:
            raise ValueError("states and actions must have equal length")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)

    @property
    def steps(self) -> list[tuple[int, int]]:
        return [(int(s), int(a)) for s, a in zip(self.states, self.actions)]

    def __len__(self):
        return len(self.states)

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return np.array_equal(self.states, other.states) and np.array_equal(self.actions, other.actions)

    def __hash__(self):
        return hash((self.states.tobytes(), self.actions.tobytes()))


@dataclass(frozen=True)
class Instance:
    """An MDP together with its feature table."""

    spec: MdpSpec
    feats: FeatureTable

    def __post_init__(self):
        S, A, d = self.feats.shape
        if (S, A, d) != (self.spec.num_states, self.spec.num_actions, self.spec.feature_dim):
            raise ValueError("feature table does not match the MDP dimensions")


def check_trajectory(spec: MdpSpec, traj: Trajectory) -> None:
    if len(traj) != spec.horizon:
        raise ValueError(f"trajectory has {len(traj)} steps, horizon is {spec.horizon}")
    if traj.states.min() < 0 or traj.states.max() >= spec.num_states:
        raise ValueError("state index out of range")
    if traj.actions.min() < 0 or traj.actions.max() >= spec.num_actions:
        raise ValueError("action index out of range")


def make_random_instance(num_states, num_actions, horizon, feature_dim, rng, phi_bound=1.0) -> Instance:
    """Random tabular MDP: Dirichlet(1) rows and initial law, uniform features.

    Features are drawn i.i.d. on ``[-1, 1]^d`` and rescaled so that the largest
    feature norm equals ``phi_bound`` exactly.
    """
    S, A, d = int(num_states), int(num_actions), int(feature_dim)
    P = rng.dirichlet(np.ones(S), size=(S, A))
    mu = rng.dirichlet(np.ones(S))
    phi = rng.uniform(-1.0, 1.0, size=(S, A, d))
    phi *= phi_bound / np.linalg.norm(phi, axis=-1).max()
    # dirichlet rows can be off by an ulp or two
    P /= P.sum(axis=-1, keepdims=True)
    mu /= mu.sum()
    spec = MdpSpec(S, A, int(horizon), P, mu, d)
    return Instance(spec, FeatureTable(phi, phi_bound=float(phi_bound)))


# --- policy -----------------------------------------------------------------


def _logits(feats: FeatureTable, theta) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (feats.shape[2],):
        raise ValueError(f"theta has shape {theta.shape}, expected ({feats.shape[2]},)")
    with np.errstate(over="ignore", invalid="ignore"):
        z = feats.phi @ theta
    if not np.all(np.isfinite(z)):
        raise NumericDomainError("non-finite policy logits")
    return z


def log_policy(feats: FeatureTable, theta) -> np.ndarray:
    """Table of ``log pi(u|s)``, shape (S, A)."""
    z = _logits(feats, theta)
    zmax = z.max(axis=1, keepdims=True)
    return z - zmax - np.log(np.exp(z - zmax).sum(axis=1, keepdims=True))


class PolicyTables(NamedTuple):
    logp: np.ndarray  # (S, A)
    probs: np.ndarray  # (S, A)
    score: np.ndarray  # (S, A, d), grad of log pi(u|s)


def policy_tables(feats: FeatureTable, theta) -> PolicyTables:
    logp = log_policy(feats, theta)
    probs = np.exp(logp)
    mean_phi = np.einsum("sa,sad->sd", probs, feats.phi)
    return PolicyTables(logp, probs, feats.phi - mean_phi[:, None, :])


def action_probs(spec: MdpSpec, feats: FeatureTable, theta, state: int) -> np.ndarray:
    if not 0 <= state < spec.num_states:
        raise ValueError(f"state {state} out of range")
    z = _logits(feats, theta)[state]
    e = np.exp(z - z.max())
    return e / e.sum()


def step_score(spec: MdpSpec, feats: FeatureTable, theta, state: int, action: int) -> np.ndarray:
    """``phi(s,u) - E_{u'~pi}[phi(s,u')]``."""
    p = action_probs(spec, feats, theta, state)
    if not 0 <= action < spec.num_actions:
        raise ValueError(f"action {action} out of range")
    phi_s = feats.phi[state]
    return phi_s[action] - p @ phi_s


def trajectory_score(spec: MdpSpec, feats: FeatureTable, theta, traj: Trajectory) -> np.ndarray:
    check_trajectory(spec, traj)
    score = policy_tables(feats, theta).score
    return score[traj.states, traj.actions].sum(axis=0)


def trajectory_log_prob(feats: FeatureTable, theta, traj: Trajectory) -> float:
    """Policy part of ``log pi(tau)``; dynamics terms cancel in every ratio we use."""
    return float(log_policy(feats, theta)[traj.states, traj.actions].sum())


# --- sampling ---------------------------------------------------------------


def _categorical(cdf_rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    idx = (cdf_rows < u[:, None]).sum(axis=1)
    return np.minimum(idx, cdf_rows.shape[1] - 1)


def sample_trajectories(spec: MdpSpec, feats: FeatureTable, theta, n: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``n`` trajectories; returns (states, actions), each of shape (n, H)."""
    H = spec.horizon
    pol_cdf = np.cumsum(policy_tables(feats, theta).probs, axis=1)
    trans_cdf = np.cumsum(spec.transition, axis=-1)
    init_cdf = np.cumsum(spec.initial_dist)
    u = rng.random((n, 2 * H))
    states = np.empty((n, H), dtype=np.int64)
    actions = np.empty((n, H), dtype=np.int64)
    s = _categorical(np.broadcast_to(init_cdf, (n, spec.num_states)), u[:, 0])
    for h in range(H):
        states[:, h] = s
        a = _categorical(pol_cdf[s], u[:, 2 * h + 1])
        actions[:, h] = a
        if h + 1 < H:
            s = _categorical(trans_cdf[s, a], u[:, 2 * h + 2])
    return states, actions


def sample_trajectory(spec: MdpSpec, feats: FeatureTable, theta, rng) -> Trajectory:
    states, actions = sample_trajectories(spec, feats, theta, 1, rng)
    return Trajectory(states[0], actions[0])


# --- serialisation ----------------------------------------------------------


def instance_to_dict(inst: Instance) -> dict:
    spec = inst.spec
    return {
        "num_states": spec.num_states,
        "num_actions": spec.num_actions,
        "horizon": spec.horizon,
        "feature_dim": spec.feature_dim,
        "transition": spec.transition.tolist(),
        "initial_dist": spec.initial_dist.tolist(),
        "phi": inst.feats.phi.tolist(),
    }


def instance_from_dict(doc: dict) -> Instance:
    spec = MdpSpec(
        num_states=int(doc["num_states"]),
        num_actions=int(doc["num_actions"]),
        horizon=int(doc["horizon"]),
        transition=np.array(doc["transition"], dtype=float),
        initial_dist=np.array(doc["initial_dist"], dtype=float),
        feature_dim=int(doc["feature_dim"]),
    )
    return Instance(spec, FeatureTable(np.array(doc["phi"], dtype=float)))


def dump_instance(inst: Instance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(inst), fh)


def load_instance(path) -> Instance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))
