"""DPO loss and its score-function gradient for log-linear policies.

For a pair ``(tau+, tau-)`` with ``omega = beta * [(log pi(tau+) - log pi(tau-))
- (log pi_ref(tau+) - log pi_ref(tau-))]`` the loss is ``-log sigmoid(omega)``
and its gradient is ``-beta * sigmoid(-omega) * (nu(tau+) - nu(tau-))`` where
``nu`` is the trajectory score.  The minus sign matters: descending this
gradient raises the policy log-ratio of the preferred trajectory.  The
reference policy is frozen.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .env import FeatureTable, MdpSpec, log_policy, policy_tables
from .preference import PairBatch, as_batch


@dataclass(frozen=True)
class DpoConfig:
    beta: float = 0.2
    ref_theta: np.ndarray = field(default=None)
    loss_offset: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.ref_theta is not None:
            object.__setattr__(self, "ref_theta", np.asarray(self.ref_theta, dtype=float))

    def reference(self, d: int) -> np.ndarray:
        return np.zeros(d) if self.ref_theta is None else self.ref_theta


def log_sigmoid(x):
    """``log(1 / (1 + exp(-x)))`` without overflow on either tail."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = -np.log1p(np.exp(-x[pos]))
    out[~pos] = x[~pos] - np.log1p(np.exp(x[~pos]))
    return out


def _log_ratio(logp: np.ndarray, batch: PairBatch) -> np.ndarray:
    plus = logp[batch.plus_states, batch.plus_actions].sum(axis=1)
    minus = logp[batch.minus_states, batch.minus_actions].sum(axis=1)
    return plus - minus


def reference_gaps(feats: FeatureTable, cfg: DpoConfig, batch: PairBatch) -> np.ndarray:
    """``log pi_ref(tau+) - log pi_ref(tau-)`` for every pair (constant in theta)."""
    return _log_ratio(log_policy(feats, cfg.reference(feats.shape[2])), batch)


def batch_logit_gaps(feats, theta, cfg: DpoConfig, batch: PairBatch, ref_gaps=None) -> np.ndarray:
    if ref_gaps is None:
        ref_gaps = reference_gaps(feats, cfg, batch)
    return cfg.beta * (_log_ratio(log_policy(feats, theta), batch) - ref_gaps)


def batch_losses(feats, theta, cfg: DpoConfig, batch: PairBatch, ref_gaps=None) -> np.ndarray:
    return -log_sigmoid(batch_logit_gaps(feats, theta, cfg, batch, ref_gaps)) + cfg.loss_offset


def batch_pair_gradients(feats, theta, cfg: DpoConfig, batch: PairBatch, ref_gaps=None) -> np.ndarray:
    """Per-pair gradients, shape (n, d)."""
    if ref_gaps is None:
        ref_gaps = reference_gaps(feats, cfg, batch)
    tables = policy_tables(feats, theta)
    omega = cfg.beta * (_log_ratio(tables.logp, batch) - ref_gaps)
    nu_plus = tables.score[batch.plus_states, batch.plus_actions].sum(axis=1)
    nu_minus = tables.score[batch.minus_states, batch.minus_actions].sum(axis=1)
    return (-cfg.beta * expit(-omega))[:, None] * (nu_plus - nu_minus)


def mean_loss(feats, theta, cfg: DpoConfig, batch: PairBatch, ref_gaps=None) -> float:
    return float(batch_losses(feats, theta, cfg, batch, ref_gaps).mean())


def mean_gradient(feats, theta, cfg: DpoConfig, batch: PairBatch, ref_gaps=None) -> np.ndarray:
    return batch_pair_gradients(feats, theta, cfg, batch, ref_gaps).mean(axis=0)


# single-pair API (spec objects, not arrays)


def logit_gap(spec: MdpSpec, feats: FeatureTable, theta, cfg: DpoConfig, pair) -> float:
    return float(batch_logit_gaps(feats, theta, cfg, as_batch(pair))[0])


def pair_loss(spec: MdpSpec, feats: FeatureTable, theta, cfg: DpoConfig, pair) -> float:
    return float(batch_losses(feats, theta, cfg, as_batch(pair))[0])


def pair_gradient(spec: MdpSpec, feats: FeatureTable, theta, cfg: DpoConfig, pair) -> np.ndarray:
    return batch_pair_gradients(feats, theta, cfg, as_batch(pair))[0]


def batch_gradient(spec: MdpSpec, feats: FeatureTable, theta, cfg: DpoConfig, batch) -> np.ndarray:
    """Average of :func:`pair_gradient` over a nonempty minibatch."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    return mean_gradient(feats, theta, cfg, as_batch(batch))
