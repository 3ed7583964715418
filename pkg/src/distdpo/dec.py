"""DecDPO: gossip mixing over a fixed graph interleaved with local DPO steps.

One round at node ``i`` with ``k`` local steps:

1. ``k - 1`` plain local steps ``theta_i <- theta_i - eta * g_i(theta_i)``;
2. a last gradient ``g_i`` evaluated at the current (pre-mix) ``theta_i``;
3. mixing ``theta_i^{1/2} = sum_j W_ij theta_j``;
4. ``theta_i <- theta_i^{1/2} - eta * g_i``.

So the gradient is computed before mixing but applied after it, and there is
exactly one communication per round.  With ``k = 1`` this is the textbook
single-step recursion, for which the network average moves by ``-eta`` times
the node-mean gradient.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .fed import clip
from .metrics import RoundMetrics
from .problem import objective_weights
from .rng import stream
from .topology import MixingMatrix


@dataclass(frozen=True)
class DecConfig:
    topology: str = "ring"
    scheme: str | None = None
    rounds: int = 80
    step_size: float = 1e-4
    batch_size: int = 4
    local_steps: int = 5
    clip_norm: float | None = 1.0
    shared_minibatch_seed: bool = False

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.rounds < 0:
            raise ValueError("rounds must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.local_steps < 1:
            raise ValueError("local_steps must be at least 1")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive or None")


@dataclass(frozen=True)
class NodeStates:
    thetas: np.ndarray  # (N, d)
    round: int = 0

    def __post_init__(self):
        T = np.asarray(self.thetas, dtype=float)
        if T.ndim != 2:
            raise ValueError("thetas must be an (N, d) array")
        if not np.all(np.isfinite(T)):
            raise ValueError("node parameters must be finite")
        object.__setattr__(self, "thetas", T)

    @property
    def average(self) -> np.ndarray:
        return self.thetas.mean(axis=0)


def mix(states: NodeStates, m: MixingMatrix) -> NodeStates:
    if states.thetas.shape[0] != m.n:
        raise ValueError("number of nodes does not match the mixing matrix")
    return NodeStates(m.weights @ states.thetas, states.round)


def consensus_error(states) -> float:
    """``(1/N) sum_i ||theta_i - mean||^2``."""
    T = states.thetas if isinstance(states, NodeStates) else np.asarray(states, dtype=float)
    dev = T - T.mean(axis=0)
    return float(np.einsum("nd,nd->", dev, dev) / T.shape[0])


class DecStep(NamedTuple):
    round: int
    before: np.ndarray  # theta^r, (N, d)
    last_grads: np.ndarray  # gradient evaluated pre-mix and applied post-mix
    applied: np.ndarray  # sum of all gradients applied at each node this round
    after: np.ndarray  # theta^{r+1}


def iterate_decdpo(problem, cfg: DecConfig, m: MixingMatrix, seed: int, theta0=None, workers: int = 1):
    N, d = problem.num_clients, problem.dim
    if m.n != N:
        raise ValueError(f"mixing matrix has {m.n} nodes, problem has {N} clients")
    if theta0 is None:
        thetas = np.zeros((N, d))
    else:
        theta0 = np.asarray(theta0, dtype=float)
        thetas = np.tile(theta0, (N, 1)) if theta0.ndim == 1 else theta0.copy()
    eta = cfg.step_size
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    try:
        for r in range(cfg.rounds):

            def work(i):
                key = ("local", r) if cfg.shared_minibatch_seed else ("local", r, i)
                rng = stream(seed, *key)
                theta = thetas[i].copy()
                total = np.zeros(d)
                for _ in range(cfg.local_steps - 1):
                    g = clip(problem.stochastic_gradient(i, theta, rng, cfg.batch_size), cfg.clip_norm)
                    theta = theta - eta * g
                    total += g
                g = clip(problem.stochastic_gradient(i, theta, rng, cfg.batch_size), cfg.clip_norm)
                return theta, g, total + g

            out = list(pool.map(work, range(N))) if pool else [work(i) for i in range(N)]
            local = np.stack([o[0] for o in out])
            grads = np.stack([o[1] for o in out])
            applied = np.stack([o[2] for o in out])
            after = m.weights @ local - eta * grads
            yield DecStep(r, thetas, grads, applied, after)
            thetas = after
    finally:
        if pool:
            pool.shutdown()


def run_decdpo(problem, cfg: DecConfig, m: MixingMatrix, seed: int, theta0=None, workers: int = 1, record_elapsed: bool = False, callback=None):
    """Run DecDPO; metrics of round ``r`` are taken at the network average of ``theta^r``."""
    weights = objective_weights(problem.client_sizes, "uniform")
    t0 = time.perf_counter()
    out = []
    for step in iterate_decdpo(problem, cfg, m, seed, theta0, workers):
        avg = step.before.mean(axis=0)
        rm = RoundMetrics(
            step.round,
            float(np.sum(problem.global_gradient(avg, weights) ** 2)),
            problem.global_loss(avg, weights),
            consensus_error(step.before),
            1e3 * (time.perf_counter() - t0) if record_elapsed else None,
        )
        if callback:
            callback(rm)
        out.append(rm)
    return out
