"""Declarative run configuration, parsed from and serialised to JSON.

Every section is a frozen dataclass whose defaults reproduce the reference
hyperparameters (N=5, b=4, beta=0.2, eta=1e-4, clip 1.0, R=80, three local steps
for FedDPO and five for DecDPO, seeds 42/43/44).  Unknown keys are rejected by
name and each section's own validation runs on construction.
"""
from __future__ import annotations

import json
from dataclasses import MISSING, asdict, dataclass, field, fields

from .dec import DecConfig
from .dpo import DpoConfig
from .fed import FedConfig
from .scenario import DataConfig, InstanceConfig

BASE_MODES = ("fed", "dec", "lowerbound", "check-constants", "gradcheck")
SWEEP_AXES = ("participation", "local_steps", "staleness", "topology")
MODES = BASE_MODES + tuple(f"sweep:{a}" for a in SWEEP_AXES)


class ConfigError(ValueError):
    """Malformed or invalid run configuration (CLI exit status 2)."""


@dataclass(frozen=True)
class DpoSettings:
    beta: float = 0.2
    loss_offset: float = 0.0
    ref_theta: tuple | None = None  # zeros when omitted

    def __post_init__(self):
        self.to_dpo_config()

    def to_dpo_config(self) -> DpoConfig:
        return DpoConfig(self.beta, None if self.ref_theta is None else list(self.ref_theta), self.loss_offset)


@dataclass(frozen=True)
class LowerBoundSettings:
    n_clients: int = 8
    alpha: float = 1.0
    noise_std: float = 0.5
    E_grid: tuple = (1, 2, 4)
    S_grid: tuple = (1, 2, 4, 8)
    seeds: tuple = (1, 2, 3, 4, 5)
    rounds: int = 200
    base_step: float = 0.5
    rule: str = "inverse_E"
    tail: int = 10

    def __post_init__(self):
        if self.n_clients < 2 or self.n_clients % 2:
            raise ValueError("n_clients must be even and at least 2")
        if not self.E_grid or not self.S_grid or not self.seeds:
            raise ValueError("E_grid, S_grid and seeds must be nonempty")
        if any(E < 1 for E in self.E_grid):
            raise ValueError("local steps must be at least 1")
        if any(not 1 <= S <= self.n_clients for S in self.S_grid):
            raise ValueError("participation exceeds client count")
        if self.rule not in ("inverse_E", "constant"):
            raise ValueError("rule must be 'inverse_E' or 'constant'")
        if not 1 <= self.tail <= self.rounds:
            raise ValueError("tail must lie in [1, rounds]")


@dataclass(frozen=True)
class SweepSettings:
    grid: tuple | None = None  # axis default when omitted
    tail: int = 10
    floor_tail: int = 20

    def __post_init__(self):
        if self.grid is not None and not self.grid:
            raise ValueError("grid must be nonempty when given")
        if self.tail < 1 or self.floor_tail < 1:
            raise ValueError("tail and floor_tail must be positive")


@dataclass(frozen=True)
class ConstantsSettings:
    num_samples: int = 4000
    inflate: bool = True
    theta: tuple | None = None  # zeros when omitted

    def __post_init__(self):
        if self.num_samples < 2:
            raise ValueError("num_samples must be at least 2")


@dataclass(frozen=True)
class GradcheckSettings:
    num_instances: int = 20
    step: float = 1e-5
    tol: float = 1e-6

    def __post_init__(self):
        if self.num_instances < 1:
            raise ValueError("num_instances must be positive")
        if not self.step > 0 or not self.tol > 0:
            raise ValueError("step and tol must be positive")


SECTIONS = {
    "instance": InstanceConfig,
    "data": DataConfig,
    "dpo": DpoSettings,
    "fed": FedConfig,
    "dec": DecConfig,
    "lowerbound": LowerBoundSettings,
    "sweep": SweepSettings,
    "constants": ConstantsSettings,
    "gradcheck": GradcheckSettings,
}


@dataclass(frozen=True)
class RunConfig:
    """A complete run.  ``fed.num_clients`` sets N for every DPO mode."""

    mode: str = "fed"
    master_seed: int = 42
    seeds: tuple = (42, 43, 44)
    output_dir: str = "runs"
    workers: int = 1
    record_elapsed: bool = False
    instance: InstanceConfig = field(default_factory=InstanceConfig)
    data: DataConfig = field(default_factory=DataConfig)
    dpo: DpoSettings = field(default_factory=DpoSettings)
    fed: FedConfig = field(default_factory=FedConfig)
    dec: DecConfig = field(default_factory=DecConfig)
    lowerbound: LowerBoundSettings = field(default_factory=LowerBoundSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    constants: ConstantsSettings = field(default_factory=ConstantsSettings)
    gradcheck: GradcheckSettings = field(default_factory=GradcheckSettings)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {', '.join(MODES)}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.mode.startswith("sweep:") and len(self.seeds) < 3:
            raise ValueError("a sweep needs at least three seeds per cell")
        if self.dpo.ref_theta is not None and len(self.dpo.ref_theta) != self.instance.feature_dim:
            raise ValueError("dpo.ref_theta length must equal instance.feature_dim")
        if self.constants.theta is not None and len(self.constants.theta) != self.instance.feature_dim:
            raise ValueError("constants.theta length must equal instance.feature_dim")
        if max(self.fed.batch_size, self.dec.batch_size) > self.data.pairs_per_client:
            raise ValueError("batch_size exceeds pairs_per_client")
        grid = self.sweep.grid
        if self.mode == "sweep:participation" and grid and any(not 1 <= S <= self.num_clients for S in grid):
            raise ValueError("participation exceeds client count")

    @property
    def num_clients(self) -> int:
        return self.fed.num_clients


def _coerce(value, default):
    if isinstance(value, list):
        return tuple(_coerce(v, None) for v in value)
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    return value


def _build(cls, doc, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    known = {f.name: f for f in fields(cls)}
    for key in doc:
        if key not in known:
            raise ConfigError(f"unknown field '{where + '.' if where else ''}{key}'")
    kwargs = {}
    for name, value in doc.items():
        f = known[name]
        if name in SECTIONS and cls is RunConfig:
            kwargs[name] = _build(SECTIONS[name], value, name)
            continue
        default = f.default if f.default is not MISSING else None
        kwargs[name] = _coerce(value, default)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{where or 'config'}: {exc}") from exc


def config_from_dict(doc: dict) -> RunConfig:
    return _build(RunConfig, doc, "")


def parse_config(text: str) -> RunConfig:
    """Parse a JSON document; an empty document gives the all-defaults config."""
    if not text.strip():
        return RunConfig()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed config document: {exc}") from exc
    return config_from_dict(doc)


def config_to_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)


def dump_config(cfg: RunConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)
