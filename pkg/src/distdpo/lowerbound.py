"""Two-group quadratic federation behind the heterogeneity lower bound.

Half the clients minimise ``0.5 ||theta - (alpha, 0)||^2``, the other half
``0.5 ||theta - (-alpha, 0)||^2``.  The global optimum is the origin, the
gradient diversity at the origin is exactly ``alpha^2``, and any round that
samples an unbalanced subset of clients is pulled off the origin.  Running the
ordinary FedDPO loop on it (through the pluggable problem interface) exhibits
how the stationary gap grows with local steps and shrinks with participation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fed import FedConfig, run_feddpo


@dataclass(frozen=True)
class QuadraticInstance:
    n_clients: int = 8
    alpha: float = 1.0
    noise_std: float = 0.0

    def __post_init__(self):
        if self.n_clients < 2 or self.n_clients % 2:
            raise ValueError("n_clients must be even and at least 2")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")

    def group(self, client: int) -> str:
        return "A" if client < self.n_clients // 2 else "B"

    def optimum(self, group: str) -> np.ndarray:
        if group == "A":
            return np.array([self.alpha, 0.0])
        if group == "B":
            return np.array([-self.alpha, 0.0])
        raise ValueError(f"unknown group {group!r}")


def quad_gradient(inst: QuadraticInstance, group: str, theta, rng) -> np.ndarray:
    g = np.asarray(theta, dtype=float) - inst.optimum(group)
    if inst.noise_std > 0:
        g = g + inst.noise_std * rng.standard_normal(2)
    return g


class QuadraticProblem:
    """Adapter exposing :class:`QuadraticInstance` through the runtime problem surface."""

    dim = 2

    def __init__(self, inst: QuadraticInstance):
        self.inst = inst
        self.num_clients = inst.n_clients
        self.client_sizes = np.ones(inst.n_clients, dtype=int)

    def stochastic_gradient(self, i, theta, rng, batch_size):
        # averaging batch_size noisy samples shrinks the noise by sqrt(batch_size)
        clean = np.asarray(theta, dtype=float) - self.inst.optimum(self.inst.group(i))
        if self.inst.noise_std == 0:
            return clean
        return clean + self.inst.noise_std * rng.standard_normal((batch_size, 2)).mean(axis=0)

    def client_gradient(self, i, theta):
        return np.asarray(theta, dtype=float) - self.inst.optimum(self.inst.group(i))

    def client_loss(self, i, theta):
        return 0.5 * float(np.sum(self.client_gradient(i, theta) ** 2))

    def global_gradient(self, theta, weights):
        return sum(w * self.client_gradient(i, theta) for i, w in enumerate(weights))

    def global_loss(self, theta, weights):
        return float(sum(w * self.client_loss(i, theta) for i, w in enumerate(weights)))


def step_size_rule(E: int, base: float, rule: str = "inverse_E") -> float:
    if rule == "inverse_E":
        return base / E
    if rule == "constant":
        return base
    raise ValueError(f"unknown step-size rule {rule!r}")


@dataclass(frozen=True)
class LowerBoundCell:
    E: int
    S: int
    alpha: float
    noise_std: float
    seed: int
    final_gap: float


def run_lowerbound_sweep(
    inst: QuadraticInstance,
    E_grid,
    S_grid,
    seeds,
    rounds: int = 200,
    base_step: float = 0.5,
    rule: str = "inverse_E",
    tail: int = 10,
    theta0=None,
) -> list[LowerBoundCell]:
    """Final stationary gap ``||grad L(theta^R)||^2`` (tail-averaged) for every (E, S, seed)."""
    from .bench import stationary_gap

    if not list(E_grid) or not list(S_grid):
        raise ValueError("grids must be nonempty")
    problem = QuadraticProblem(inst)
    start = np.array([inst.alpha, inst.alpha]) if theta0 is None else theta0
    cells = []
    for E in E_grid:
        for S in S_grid:
            cfg = FedConfig(
                num_clients=inst.n_clients,
                participation=S,
                local_steps=E,
                rounds=rounds,
                step_size=step_size_rule(E, base_step, rule),
                batch_size=1,
                clip_norm=None,
                weighting="uniform",
            )
            for seed in seeds:
                gap = stationary_gap(run_feddpo(problem, cfg, seed, start), tail)
                cells.append(LowerBoundCell(E, S, inst.alpha, inst.noise_std, seed, gap))
    return cells


def median_table(cells) -> dict:
    """``{(E, S): median final gap over seeds}``."""
    out = {}
    for key in sorted({(c.E, c.S) for c in cells}):
        out[key] = float(np.median([c.final_gap for c in cells if (c.E, c.S) == key]))
    return out


def log_slope(table: dict) -> float:
    """Slope of ``log gap`` regressed on ``log(E/S)`` over cells with a positive gap."""
    keys = [k for k, v in table.items() if v > 0]
    x = np.log([E / S for E, S in keys])
    y = np.log([table[k] for k in keys])
    return float(np.polyfit(x, y, 1)[0])
