"""Per-round metrics and their CSV form."""
from __future__ import annotations

import csv
from dataclasses import dataclass

HEADER = ("round", "grad_norm_sq", "loss", "consensus_error", "elapsed_ms")


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    global_grad_norm_sq: float
    global_loss: float
    consensus_error: float | None = None
    elapsed: float | None = None  # milliseconds since the run started

    def __post_init__(self):
        if self.global_grad_norm_sq < 0:
            raise ValueError("global_grad_norm_sq must be nonnegative")
        if self.consensus_error is not None and self.consensus_error < 0:
            raise ValueError("consensus_error must be nonnegative")


def _fmt(x) -> str:
    # repr of a float round-trips exactly
    return "" if x is None else repr(float(x))


class MetricsWriter:
    """Writes one CSV row per round and flushes after each row."""

    def __init__(self, fh):
        self._fh = fh
        self._writer = csv.writer(fh, lineterminator="\n")
        self._writer.writerow(HEADER)
        fh.flush()

    def write(self, m: RoundMetrics) -> None:
        self._writer.writerow(
            [m.round, _fmt(m.global_grad_norm_sq), _fmt(m.global_loss), _fmt(m.consensus_error), _fmt(m.elapsed)]
        )
        self._fh.flush()


def write_metrics_csv(path, metrics) -> None:
    with open(path, "w", newline="") as fh:
        w = MetricsWriter(fh)
        for m in metrics:
            w.write(m)


def read_metrics_csv(path) -> list[RoundMetrics]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            opt = lambda k: float(row[k]) if row[k] != "" else None  # noqa: E731
            out.append(RoundMetrics(int(row["round"]), float(row["grad_norm_sq"]), float(row["loss"]), opt("consensus_error"), opt("elapsed_ms")))
    return out
