"""Spectral quantity rho of each five-node graph and the consensus floor DecDPO settles at.

Run with ``python demos/topology_consensus.py``.
"""
from distdpo.bench import sweep_topology
from distdpo.dec import DecConfig
from distdpo.scenario import DataConfig, InstanceConfig, build_problem
from distdpo.topology import KINDS, topology

# Default weights: uniform over the closed neighbourhood on regular graphs, Metropolis otherwise.
for kind in KINDS:
    print(f"{kind:9s} rho = {topology(kind, 5).rho:.4f}   metropolis rho = {topology(kind, 5, 'metropolis').rho:.4f}")

problem = build_problem(InstanceConfig(), DataConfig(), num_clients=5)
cfg = DecConfig(step_size=0.5, local_steps=1, clip_norm=None, rounds=200)
res = sweep_topology(problem, cfg, KINDS)
print()
for kind in KINDS:
    ex = res.extra[kind]
    print(f"{kind:9s} floor {ex['consensus_floor']:.3e}   eta^2/(1-rho^2) {cfg.step_size**2 / (1 - ex['rho'] ** 2):.3f}")
print(f"fit through the origin over {res.fit['kinds']}: slope {res.fit['slope']:.3e}, R^2 {res.fit['r2']:.3f}")
