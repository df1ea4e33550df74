"""Reader for the harness CSV schemas (stats, phases).

Stats schema: experiment_id, engine {discrete|sde|oracle}, step, time,
loss_mean, loss_std, n_alive, then mean_i and cov_ii per coordinate.
Phase schema: experiment_id, engine, step, time, then per coordinate
majority_i, p1_i, p2_i, p3_i.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

STATS_REQUIRED = ("experiment_id", "engine", "step", "time", "loss_mean", "loss_std", "n_alive")
PHASES_REQUIRED = ("experiment_id", "engine", "step", "time", "majority_0")


class SchemaError(ValueError):
    """CSV does not conform to the harness schema."""


class EmptyCsvError(ValueError):
    """CSV has a header but no data rows (or no content at all)."""


@dataclass
class StatsTable:
    path: str
    experiment_id: str
    engine: str
    step: np.ndarray
    time: np.ndarray
    loss_mean: np.ndarray
    loss_std: np.ndarray
    n_alive: np.ndarray
    mean: np.ndarray   # (n, d)
    cov: np.ndarray    # (n, d)

    @property
    def dim(self) -> int:
        return self.mean.shape[1]

    @property
    def is_oracle(self) -> bool:
        return self.engine == "oracle"


@dataclass
class PhaseTable:
    path: str
    experiment_id: str
    time: np.ndarray
    majority: np.ndarray    # (n, d) labels in {1, 2, 3}
    fractions: np.ndarray   # (n, d, 3)

    @property
    def dim(self) -> int:
        return self.majority.shape[1]


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyCsvError(f"{path}: empty CSV")
        rows = [row for row in reader if row]
    if not rows:
        raise EmptyCsvError(f"{path}: empty CSV (header only)")
    return header, rows


def _require(header, required, path):
    for col in required:
        if col not in header:
            raise SchemaError(f"{path}: missing column '{col}'")


def read_stats(path) -> StatsTable:
    header, rows = _read_rows(path)
    _require(header, STATS_REQUIRED, path)
    idx = {name: i for i, name in enumerate(header)}
    mean_cols = sorted((c for c in header if c.startswith("mean_")), key=lambda c: int(c[5:]))
    cov_cols = [c for c in header if c.startswith("cov_")]

    def col(name, dtype=float):
        try:
            return np.array([dtype(r[idx[name]]) for r in rows])
        except ValueError as exc:
            raise SchemaError(f"{path}: column '{name}' is not numeric ({exc})")

    d = len(mean_cols)
    return StatsTable(
        path=str(path),
        experiment_id=rows[0][idx["experiment_id"]],
        engine=rows[0][idx["engine"]],
        step=col("step", int),
        time=col("time"),
        loss_mean=col("loss_mean"),
        loss_std=col("loss_std"),
        n_alive=col("n_alive", int),
        mean=np.column_stack([col(c) for c in mean_cols]) if d else np.zeros((len(rows), 0)),
        cov=np.column_stack([col(c) for c in cov_cols]) if d else np.zeros((len(rows), 0)),
    )


def read_phases(path) -> PhaseTable:
    header, rows = _read_rows(path)
    _require(header, PHASES_REQUIRED, path)
    idx = {name: i for i, name in enumerate(header)}
    d = sum(1 for c in header if c.startswith("majority_"))

    def col(name, dtype=float):
        try:
            return np.array([dtype(r[idx[name]]) for r in rows])
        except ValueError as exc:
            raise SchemaError(f"{path}: column '{name}' is not numeric ({exc})")

    majority = np.column_stack([col(f"majority_{i}", int) for i in range(d)])
    fractions = np.stack(
        [np.column_stack([col(f"p{p}_{i}") for p in (1, 2, 3)]) for i in range(d)], axis=1
    )
    return PhaseTable(
        path=str(path),
        experiment_id=rows[0][idx["experiment_id"]],
        time=col("time"),
        majority=majority,
        fractions=fractions,
    )
