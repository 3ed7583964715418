"""``distdpo <mode> --config <path> [--out <dir>] [--seed <u64>]``.

Every run writes its artifacts, a ``summary.json`` and a ``manifest.json`` into
the output directory.  The manifest echoes the full configuration, so
``distdpo replay --config <run>/manifest.json`` reproduces the run.

Exit status: 0 success, 2 configuration error, 3 runtime error, 4 I/O error.
Failures also print (and, when possible, write) an ``error.json``.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bench import (
    consensus_floor,
    stationary_gap,
    sweep_local_steps,
    sweep_participation,
    sweep_staleness,
    sweep_topology,
    write_sweep,
)
from .config import MODES, ConfigError, RunConfig, config_from_dict, config_to_dict, parse_config
from .constants import estimate_constants
from .dec import run_decdpo
from .fed import run_feddpo, step_size_ceiling
from .gradcheck import run_gradcheck
from .lowerbound import QuadraticInstance, log_slope, median_table, run_lowerbound_sweep
from .metrics import MetricsWriter
from .rng import stream
from .scenario import build_problem
from .topology import topology

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4

SWEEP_DEFAULT_GRIDS = {
    "participation": (1, 3, 5),
    "local_steps": (1, 3, 6),
    "staleness": (0, 2, 5),
    "topology": ("path", "ring", "star", "complete"),
}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def prepare_output_dir(path) -> Path:
    """Create ``path`` and prove it is writable; raises ``OSError`` otherwise."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".write_probe"
    probe.write_text("")
    probe.unlink()
    return out


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _problem(cfg: RunConfig):
    return build_problem(cfg.instance, cfg.data, cfg.num_clients, cfg.dpo.to_dpo_config())


def _theta(cfg: RunConfig) -> np.ndarray:
    d = cfg.instance.feature_dim
    return np.zeros(d) if cfg.constants.theta is None else np.asarray(cfg.constants.theta, float)


def _constants(cfg: RunConfig, problem):
    return estimate_constants(
        problem.inst,
        _theta(cfg),
        cfg.dpo.beta,
        cfg.constants.num_samples,
        stream(cfg.master_seed, "constants"),
        inflate=cfg.constants.inflate,
        clients=problem.clients,
        dpo_cfg=problem.dpo,
    )


def _tail(n: int, want: int) -> int:
    return max(1, min(want, n))


def _run_training(cfg: RunConfig, out: Path, problem, mode: str) -> dict:
    path = out / "metrics.csv"
    with open(path, "w", newline="") as fh:
        writer = MetricsWriter(fh)
        if mode == "fed":
            ms = run_feddpo(problem, cfg.fed, cfg.master_seed, workers=cfg.workers,
                            record_elapsed=cfg.record_elapsed, callback=writer.write)
        else:
            m = topology(cfg.dec.topology, cfg.num_clients, cfg.dec.scheme)
            ms = run_decdpo(problem, cfg.dec, m, cfg.master_seed, workers=cfg.workers,
                            record_elapsed=cfg.record_elapsed, callback=writer.write)
    summary = {"rounds": len(ms), "artifacts": [path.name]}
    if ms:
        summary["final_gap"] = stationary_gap(ms, _tail(len(ms), cfg.sweep.tail))
        summary["final_loss"] = ms[-1].global_loss
    if mode == "dec":
        summary["rho"] = m.rho
        if ms:
            summary["consensus_floor"] = consensus_floor(ms, _tail(len(ms), cfg.sweep.floor_tail))
    return summary


def _run_lowerbound(cfg: RunConfig, out: Path) -> dict:
    lb = cfg.lowerbound
    inst = QuadraticInstance(lb.n_clients, lb.alpha, lb.noise_std)
    cells = run_lowerbound_sweep(inst, lb.E_grid, lb.S_grid, lb.seeds, lb.rounds, lb.base_step, lb.rule, lb.tail)
    path = out / "lowerbound.csv"
    with open(path, "w") as fh:
        fh.write("E,S,alpha,noise_std,seed,final_gap\n")
        for c in cells:
            fh.write(f"{c.E},{c.S},{c.alpha!r},{c.noise_std!r},{c.seed},{c.final_gap!r}\n")
    table = median_table(cells)
    positive = [v for v in table.values() if v > 0]
    return {
        "artifacts": [path.name],
        "median_gap": {f"E={E},S={S}": v for (E, S), v in table.items()},
        "log_slope": log_slope(table) if len(positive) >= 2 else None,
    }


def _run_sweep(cfg: RunConfig, out: Path, problem, axis: str, stamp: str) -> dict:
    grid = cfg.sweep.grid or SWEEP_DEFAULT_GRIDS[axis]
    seeds, tail, w = cfg.seeds, cfg.sweep.tail, cfg.workers
    if axis == "participation":
        res = sweep_participation(problem, cfg.fed, grid, seeds, tail, w)
    elif axis == "local_steps":
        res = sweep_local_steps(problem, cfg.fed, grid, seeds, tail, w)
    elif axis == "staleness":
        res = sweep_staleness(problem, cfg.fed, grid, seeds, tail, w)
    else:
        res = sweep_topology(problem, cfg.dec, grid, seeds, cfg.sweep.floor_tail, tail, workers=w)
    csv_path, json_path = write_sweep(res, out, stamp)
    return {"artifacts": [csv_path.name, json_path.name], **res.summary()}


def run(cfg: RunConfig, out: Path) -> tuple:
    """Dispatch ``cfg.mode``; returns ``(summary, ConstantReport or None)``."""
    mode = cfg.mode
    if mode == "gradcheck":
        g = cfg.gradcheck
        res = run_gradcheck(g.num_instances, cfg.master_seed, g.step, g.tol)
        _write_json(out / "gradcheck.json", res.to_dict())
        return {"artifacts": ["gradcheck.json"], "passed": res.passed, "max_rel_error": res.max_rel_error}, None
    if mode == "lowerbound":
        return _run_lowerbound(cfg, out), None

    problem = _problem(cfg)
    report = _constants(cfg, problem)
    if mode == "check-constants":
        _write_json(out / "constants.json", report.to_dict())
        return {"artifacts": ["constants.json"], **report.to_dict()}, report
    if mode in ("fed", "dec"):
        summary = _run_training(cfg, out, problem, mode)
        if mode == "fed":
            summary["step_size_ceiling"] = step_size_ceiling(report.smoothness_L, cfg.fed)
        return summary, report
    stamp = time.strftime("%Y%m%dT%H%M%S")
    return _run_sweep(cfg, out, problem, mode.split(":", 1)[1], stamp), report


def stream_roots(cfg: RunConfig) -> dict:
    """Seeds and key prefixes of every random substream a run may draw from."""
    return {
        "instance": {"seed": cfg.data.seed, "keys": ["instance"]},
        "preference_data": {"seed": cfg.data.seed, "keys": ["base_weights", "behavior", "client/<i>"]},
        "fed_runtime": {"seed": cfg.master_seed, "keys": ["select/<r>", "staleness/<r>/<i>", "local/<r>/<i>"]},
        "dec_runtime": {"seed": cfg.master_seed, "keys": ["local/<r>/<i>"]},
        "theory_constants": {"seed": cfg.master_seed, "keys": ["constants"]},
        "gradcheck": {"seed": cfg.master_seed, "keys": ["gradcheck/<k>"]},
        "sweeps": {"seeds": list(cfg.seeds)},
        "lowerbound": {"seeds": list(cfg.lowerbound.seeds)},
    }


def _error_doc(kind: str, code: int, exc: BaseException) -> dict:
    return {"status": "error", "kind": kind, "exit_code": code, "type": type(exc).__name__, "message": str(exc)}


def _report_error(doc: dict, out: Path | None) -> None:
    print(json.dumps(doc), file=sys.stderr)
    if out is not None:
        try:
            _write_json(out / "error.json", doc)
        except OSError:
            pass


def execute(cfg: RunConfig) -> int:
    """Run ``cfg`` end to end and return the process exit status."""
    try:
        out = prepare_output_dir(cfg.output_dir)
    except OSError as exc:
        _report_error(_error_doc("io", EXIT_IO, exc), None)
        return EXIT_IO
    started = _now()
    try:
        summary, report = run(cfg, out)
        manifest = {
            "config": config_to_dict(cfg),
            "constants": None if report is None else report.to_dict(),
            "version": __version__,
            "rng_streams": stream_roots(cfg),
            "started_at": started,
            "finished_at": _now(),
            "artifacts": summary.get("artifacts", []),
        }
        _write_json(out / "summary.json", {"mode": cfg.mode, **summary})
        _write_json(out / "manifest.json", manifest)
    except ConfigError as exc:
        _report_error(_error_doc("config", EXIT_CONFIG, exc), out)
        return EXIT_CONFIG
    except OSError as exc:
        _report_error(_error_doc("io", EXIT_IO, exc), out)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime error
        _report_error(_error_doc("runtime", EXIT_RUNTIME, exc), out)
        return EXIT_RUNTIME
    return EXIT_OK


def load_manifest_config(path, output_dir=None) -> RunConfig:
    doc = json.loads(Path(path).read_text())
    if "config" not in doc:
        raise ConfigError("manifest has no 'config' section")
    cfg = config_from_dict(doc["config"])
    return cfg if output_dir is None else replace(cfg, output_dir=str(output_dir))


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distdpo", description="Federated and decentralized DPO simulator.")
    p.add_argument("mode", choices=MODES + ("replay",))
    p.add_argument("--config", help="JSON run config (for replay: a manifest.json)")
    p.add_argument("--out", help="output directory, overrides output_dir")
    p.add_argument("--seed", type=int, help="master seed, overrides master_seed")
    return p


def build_config(args) -> RunConfig:
    if args.mode == "replay":
        if not args.config:
            raise ConfigError("replay needs --config <manifest.json>")
        cfg = load_manifest_config(args.config)
    else:
        text = Path(args.config).read_text() if args.config else ""
        cfg = parse_config(text)
        cfg = replace(cfg, mode=args.mode)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg = replace(cfg, master_seed=args.seed)
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = build_config(args)
    except ConfigError as exc:
        _report_error(_error_doc("config", EXIT_CONFIG, exc), None)
        return EXIT_CONFIG
    except OSError as exc:
        _report_error(_error_doc("io", EXIT_IO, exc), None)
        return EXIT_IO
    except ValueError as exc:
        _report_error(_error_doc("config", EXIT_CONFIG, exc), None)
        return EXIT_CONFIG
    return execute(cfg)


if __name__ == "__main__":
    sys.exit(main())
