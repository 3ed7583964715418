"""FedDPO: server rounds of client sampling, E local steps, weighted averaging.

With ``q_max > 0`` each selected client independently starts from a server
model that is ``q ~ Uniform{0, ..., min(r, q_max)}`` rounds old and the server
averages uniformly over the sampled clients.

Randomness is keyed by ``(purpose, round, client)`` substreams of one master
seed, so a run does not depend on the order (or thread) in which clients are
processed.
"""
from __future__ import annotations

import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .metrics import RoundMetrics
from .problem import objective_weights
from .rng import stream


@dataclass(frozen=True)
class FedConfig:
    num_clients: int = 5
    participation: int = 5
    local_steps: int = 3
    rounds: int = 80
    step_size: float = 1e-4
    batch_size: int = 4
    clip_norm: float | None = 1.0
    q_max: int = 0
    weighting: str = "data_size"
    shared_minibatch_seed: bool = False

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError("num_clients must be positive")
        if not 1 <= self.participation:
            raise ValueError("participation must be at least 1")
        if self.participation > self.num_clients:
            raise ValueError("participation exceeds client count")
        if self.local_steps < 1:
            raise ValueError("local_steps must be at least 1")
        if self.rounds < 0:
            raise ValueError("rounds must be nonnegative")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValueError("clip_norm must be positive or None")
        if self.q_max < 0:
            raise ValueError("q_max must be nonnegative")
        if self.weighting not in ("uniform", "data_size"):
            raise ValueError("weighting must be 'uniform' or 'data_size'")


@dataclass
class ServerState:
    theta: np.ndarray
    history: deque = field(default_factory=deque)  # newest last
    round: int = 0

    @classmethod
    def start(cls, theta0, q_max: int) -> "ServerState":
        theta0 = np.array(theta0, dtype=float)
        return cls(theta0, deque([theta0], maxlen=q_max + 1), 0)

    def lagged(self, k: int) -> np.ndarray:
        """``theta^{r-k}``."""
        if not 0 <= k < len(self.history):
            raise ValueError(f"lag {k} not available (have {len(self.history) - 1} past rounds)")
        return self.history[-1 - k]

    def advance(self, theta) -> None:
        self.theta = np.asarray(theta, dtype=float)
        self.history.append(self.theta)
        self.round += 1


def clip(g: np.ndarray, clip_norm: float | None) -> np.ndarray:
    if clip_norm is None:
        return g
    norm = np.linalg.norm(g)
    return g * (clip_norm / norm) if norm > clip_norm else g


def select_clients(num_clients: int, participation: int, rng) -> np.ndarray:
    """Uniform subset without replacement, returned sorted."""
    if not 1 <= participation <= num_clients:
        raise ValueError("participation must lie in [1, num_clients]")
    if participation == num_clients:
        return np.arange(num_clients)
    return np.sort(rng.choice(num_clients, size=participation, replace=False))


def local_update(problem, client: int, start_theta, cfg: FedConfig, rng) -> np.ndarray:
    theta = np.array(start_theta, dtype=float)
    for _ in range(cfg.local_steps):
        g = problem.stochastic_gradient(client, theta, rng, cfg.batch_size)
        theta = theta - cfg.step_size * clip(g, cfg.clip_norm)
    return theta


def aggregate(updates: dict, weighting: str, sizes=None) -> np.ndarray:
    """Weighted average of client parameters, summed in client-id order."""
    if not updates:
        raise ValueError("nothing to aggregate")
    ids = sorted(updates)
    if weighting == "uniform":
        lam = np.full(len(ids), 1.0 / len(ids))
    else:
        n = np.asarray([sizes[i] for i in ids], dtype=float)
        lam = n / n.sum()
    out = np.zeros_like(np.asarray(updates[ids[0]], dtype=float))
    for w, i in zip(lam, ids):
        out = out + w * np.asarray(updates[i], dtype=float)
    return out


def measure_drift(server: ServerState, k: int) -> float:
    """``||theta^r - theta^{r-k}||`` from the server's history."""
    return float(np.linalg.norm(server.theta - server.lagged(k)))


def iterate_feddpo(problem, cfg: FedConfig, seed: int, theta0=None, workers: int = 1):
    """Yield ``(server, metrics)`` for every round, metrics taken at ``theta^r``.

    The server is yielded *before* aggregation of round ``r`` and then mutated;
    copy anything you want to keep.
    """
    if problem.num_clients != cfg.num_clients:
        raise ValueError(f"problem has {problem.num_clients} clients, config says {cfg.num_clients}")
    weights = objective_weights(problem.client_sizes, cfg.weighting)
    server = ServerState.start(np.zeros(problem.dim) if theta0 is None else theta0, cfg.q_max)
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for r in range(cfg.rounds):
            theta = server.theta
            metrics = RoundMetrics(
                r,
                float(np.sum(problem.global_gradient(theta, weights) ** 2)),
                problem.global_loss(theta, weights),
            )
            yield server, metrics

            selected = select_clients(cfg.num_clients, cfg.participation, stream(seed, "select", r))
            starts = {}
            for i in selected:
                q = 0
                if cfg.q_max > 0:
                    q = int(stream(seed, "staleness", r, int(i)).integers(0, min(r, cfg.q_max) + 1))
                starts[int(i)] = server.lagged(q)

            def work(i):
                key = ("local", r) if cfg.shared_minibatch_seed else ("local", r, i)
                return local_update(problem, i, starts[i], cfg, stream(seed, *key))

            ids = sorted(starts)
            results = list(pool.map(work, ids)) if pool else [work(i) for i in ids]
            updates = dict(zip(ids, results))
            weighting = "uniform" if cfg.q_max > 0 else cfg.weighting
            server.advance(aggregate(updates, weighting, problem.client_sizes))
    finally:
        if pool:
            pool.shutdown()


def run_feddpo(problem, cfg: FedConfig, seed: int, theta0=None, workers: int = 1, record_elapsed: bool = False, callback=None):
    """Run FedDPO and return one :class:`RoundMetrics` per round.

    ``callback`` (if given) receives each round's metrics as soon as they exist.
    """
    t0 = time.perf_counter()
    out = []
    for _, m in iterate_feddpo(problem, cfg, seed, theta0, workers):
        if record_elapsed:
            m = RoundMetrics(m.round, m.global_grad_norm_sq, m.global_loss, None, 1e3 * (time.perf_counter() - t0))
        if callback:
            callback(m)
        out.append(m)
    return out


def drift_profile(problem, cfg: FedConfig, seed: int, theta0=None) -> dict:
    """Average ``||theta^r - theta^{r-k}|| / k`` over rounds, for ``k = 1..q_max``."""
    acc = {k: [] for k in range(1, cfg.q_max + 1)}
    for server, _ in iterate_feddpo(problem, cfg, seed, theta0):
        for k in acc:
            if k <= min(server.round, cfg.q_max):
                acc[k].append(measure_drift(server, k) / k)
    return {k: float(np.mean(v)) for k, v in acc.items() if v}


def step_size_ceiling(L: float, cfg: FedConfig) -> float:
    """Diagnostic only: the largest step size the partial-participation rate covers."""
    E, S, N = cfg.local_steps, cfg.participation, cfg.num_clients
    if cfg.q_max > 0:
        return min(1 / (16 * L * E), S / (32 * L * N * E * (1 + cfg.q_max)))
    return min(1 / (8 * L * E), S / (16 * L * N * E))
