"""Train a five-client federation with FedDPO and watch the stationary gap.

Run with ``python demos/federated_walkthrough.py``.
"""
from dataclasses import replace

import numpy as np

from distdpo.bench import stationary_gap
from distdpo.constants import estimate_constants
from distdpo.fed import FedConfig, run_feddpo
from distdpo.rng import stream
from distdpo.scenario import DataConfig, InstanceConfig, build_problem

problem = build_problem(InstanceConfig(), DataConfig(), num_clients=5)
print(f"instance: d={problem.dim}, H={problem.inst.spec.horizon}, pairs per client={problem.client_sizes.tolist()}")

# Constants at the starting point, inflated to their 3-sigma upper bounds.
report = estimate_constants(
    problem.inst, np.zeros(problem.dim), problem.dpo.beta, 4000, stream(0, "demo"),
    clients=problem.clients, dpo_cfg=problem.dpo,
)
print(f"zeta_phi^2={report.zeta_phi_sq:.3f}  C_mix={report.c_mix:.3f}  L={report.smoothness_L:.3f}  kappa^2={report.kappa_sq:.4f}")

# A larger step than the reference 1e-4 so that 150 rounds show visible progress.
cfg = FedConfig(step_size=0.5, rounds=150)
for S in (1, 3, 5):
    ms = run_feddpo(problem, replace(cfg, participation=S), seed=42)
    trace = " ".join(f"{m.global_grad_norm_sq:.2e}" for m in ms[::30])
    print(f"S={S}: gap every 30 rounds {trace}   final {stationary_gap(ms):.3e}")
