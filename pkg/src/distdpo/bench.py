"""Ablation sweeps over participation, local steps, staleness and topology.

Each cell is run for every seed; a cell's score is its *final stationary gap*,
the mean squared global-gradient norm over the last ``tail`` rounds.
"""
from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .dec import DecConfig, run_decdpo
from .fed import FedConfig, drift_profile, run_feddpo
from .topology import topology

DEFAULT_SEEDS = (42, 43, 44)


def stationary_gap(metrics, tail: int = 10) -> float:
    if not metrics:
        raise ValueError("no metrics")
    if not 1 <= tail <= len(metrics):
        raise ValueError(f"tail {tail} outside [1, {len(metrics)}]")
    return float(np.mean([m.global_grad_norm_sq for m in metrics[-tail:]]))


def consensus_floor(metrics, tail: int = 20) -> float:
    return float(np.mean([m.consensus_error for m in metrics[-tail:]]))


@dataclass
class SweepResult:
    axis: str
    grid: list
    seeds: list
    per_seed: dict  # axis value -> list of final gaps, in seed order
    fit: dict | None = None
    extra: dict = field(default_factory=dict)  # axis value -> dict of extra columns

    @property
    def cell_means(self) -> dict:
        return {v: float(np.mean(self.per_seed[v])) for v in self.grid}

    @property
    def cell_medians(self) -> dict:
        return {v: float(np.median(self.per_seed[v])) for v in self.grid}

    def summary(self) -> dict:
        return {
            "axis": self.axis,
            "grid": list(self.grid),
            "seeds": list(self.seeds),
            "cell_means": {str(k): v for k, v in self.cell_means.items()},
            "cell_medians": {str(k): v for k, v in self.cell_medians.items()},
            "fit": self.fit,
            "extra": {str(k): v for k, v in self.extra.items()},
        }

    def rows(self):
        extra_keys = sorted({k for v in self.extra.values() for k in v if not isinstance(v[k], (list, dict))})
        header = ["axis_value", "seed", "final_gap", *extra_keys]
        rows = []
        for v in self.grid:
            for seed, gap in zip(self.seeds, self.per_seed[v]):
                ex = self.extra.get(v, {})
                rows.append([v, seed, repr(float(gap)), *(repr(ex[k]) if k in ex else "" for k in extra_keys)])
        return header, rows


def linear_fit(x, y) -> dict:
    """Least squares ``y = slope * x + intercept`` with R^2."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r2": r2, "x_range": [float(x.min()), float(x.max())]}


def proportional_fit(x, y) -> dict:
    """Least squares ``y = slope * x`` through the origin.

    R^2 is measured against the mean of ``y`` (not against zero), so a line
    through the origin only scores well if it actually explains the spread.
    """
    x, y = np.asarray(x, float), np.asarray(y, float)
    slope = float(x @ y / (x @ x))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - slope * x) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return {"slope": slope, "r2": r2, "x_range": [float(x.min()), float(x.max())]}


def _run_cells(fn, cells, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, cells))
    return [fn(c) for c in cells]


def _fed_sweep(problem, base: FedConfig, field_name, grid, seeds, tail, workers):
    cells = [(v, s) for v in grid for s in seeds]
    gaps = _run_cells(
        lambda c: stationary_gap(run_feddpo(problem, replace(base, **{field_name: c[0]}), c[1]), tail), cells, workers
    )
    per_seed = {v: [g for (cv, _), g in zip(cells, gaps) if cv == v] for v in grid}
    return per_seed


def _check_seeds(seeds):
    seeds = list(seeds)
    if len(seeds) < 3:
        raise ValueError("a sweep needs at least three seeds per cell")
    return seeds


def sweep_participation(problem, base: FedConfig, S_grid=(1, 3, 5), seeds=DEFAULT_SEEDS, tail=10, workers=1) -> SweepResult:
    """Gap against ``1/S``; the slope estimates the variance-floor coefficient."""
    seeds = _check_seeds(seeds)
    per_seed = _fed_sweep(problem, base, "participation", list(S_grid), seeds, tail, workers)
    res = SweepResult("participation", list(S_grid), seeds, per_seed)
    if len(S_grid) >= 2:
        means = res.cell_means
        res.fit = linear_fit([1.0 / S for S in S_grid], [means[S] for S in S_grid])
    return res


def _monotone(values, increasing: bool, strict: bool) -> bool:
    pairs = list(zip(values, values[1:]))
    if increasing:
        return all(b > a if strict else b >= a for a, b in pairs)
    return all(b < a if strict else b <= a for a, b in pairs)


def sweep_local_steps(problem, base: FedConfig, E_grid=(1, 3, 6), seeds=DEFAULT_SEEDS, tail=10, workers=1) -> SweepResult:
    seeds = _check_seeds(seeds)
    grid = sorted(E_grid)
    res = SweepResult("local_steps", grid, seeds, _fed_sweep(problem, base, "local_steps", grid, seeds, tail, workers))
    med = res.cell_medians
    res.fit = {"monotone_nonincreasing": _monotone([med[E] for E in grid], False, False),
               "strictly_decreasing": _monotone([med[E] for E in grid], False, True)}
    return res


def sweep_staleness(problem, base: FedConfig, q_grid=(0, 2, 5), seeds=DEFAULT_SEEDS, tail=10, workers=1) -> SweepResult:
    """Gap per ``q_max``, plus the per-lag drift ``||theta^r - theta^{r-k}|| / k`` of the first seed."""
    seeds = _check_seeds(seeds)
    grid = sorted(q_grid)
    res = SweepResult("staleness", grid, seeds, _fed_sweep(problem, base, "q_max", grid, seeds, tail, workers))
    med = res.cell_medians
    res.fit = {"monotone_nondecreasing": _monotone([med[q] for q in grid], True, False)}
    for q in grid:
        if q > 0:
            prof = drift_profile(problem, replace(base, q_max=q), seeds[0])
            res.extra[q] = {"drift_per_lag": [prof[k] for k in sorted(prof)]}
    return res


def sweep_topology(problem, base: DecConfig, kinds=("path", "ring", "star", "complete"), seeds=DEFAULT_SEEDS,
                   floor_tail=20, tail=10, fit_exclude=("star",), workers=1) -> SweepResult:
    """Steady-state consensus error per topology and its fit against ``eta^2 / (1 - rho^2)``."""
    seeds = _check_seeds(seeds)
    kinds = list(kinds)
    mixings = {k: topology(k, problem.num_clients, base.scheme) for k in kinds}
    cells = [(k, s) for k in kinds for s in seeds]

    def run(c):
        ms = run_decdpo(problem, replace(base, topology=c[0]), mixings[c[0]], c[1])
        return stationary_gap(ms, tail), consensus_floor(ms, floor_tail)

    out = _run_cells(run, cells, workers)
    per_seed = {k: [o[0] for c, o in zip(cells, out) if c[0] == k] for k in kinds}
    res = SweepResult("topology", kinds, seeds, per_seed)
    for k in kinds:
        floors = [o[1] for c, o in zip(cells, out) if c[0] == k]
        res.extra[k] = {
            "rho": mixings[k].rho,
            "consensus_floor": float(np.mean(floors)),
            "consensus_floor_per_seed": floors,
        }
    fit_kinds = [k for k in kinds if k not in fit_exclude]
    if len(fit_kinds) >= 2:
        x = [base.step_size**2 / (1 - mixings[k].rho ** 2) for k in fit_kinds]
        y = [res.extra[k]["consensus_floor"] for k in fit_kinds]
        res.fit = {**proportional_fit(x, y), "kinds": fit_kinds}
    return res


def write_sweep(res: SweepResult, out_dir, stamp: str | None = None) -> tuple[Path, Path]:
    """Write ``<axis>_<stamp>.csv`` and the matching summary JSON."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stamp = stamp or time.strftime("%Y%m%dT%H%M%S")
    csv_path = out_dir / f"{res.axis}_{stamp}.csv"
    header, rows = res.rows()
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    json_path = out_dir / f"{res.axis}_{stamp}.json"
    json_path.write_text(json.dumps(res.summary(), indent=2, sort_keys=True))
    return csv_path, json_path


def config_dict(cfg) -> dict:
    return asdict(cfg)
