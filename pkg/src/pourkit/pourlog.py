"""Per-pour time series and their CSV / npz persistence."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, IoError

COLUMNS = ("tick", "time_s", "wrist_rad", "cmd_rad_s", "src_ml", "flight_ml", "tgt_ml", "spill_ml", "est_ml", "liq_px")
GT_COLUMN = "gt_ml"
_INT_COLUMNS = {"tick", "liq_px"}


@dataclass
class PourLog:
    """One row per control tick, recorded before the plant advances.

    ``observations`` optionally holds the inner-pixel labels behind each
    row as a (ticks, n_inner) bool array, which relabeling needs.
    """

    columns: dict
    meta: dict = field(default_factory=dict)
    observations: np.ndarray | None = None

    def __len__(self):
        return len(self.columns["tick"])

    def __getitem__(self, name) -> np.ndarray:
        return self.columns[name]

    @classmethod
    def from_rows(cls, rows, meta=None, observations=None) -> PourLog:
        cols = {c: np.array([r[c] for r in rows], dtype=np.int64 if c in _INT_COLUMNS else np.float64) for c in COLUMNS}
        return cls(cols, dict(meta or {}), observations)

    @property
    def final_ml(self) -> float:
        return float(self.meta["final_ml"])


def _fmt(name, value):
    return str(int(value)) if name in _INT_COLUMNS else repr(float(value))


def write_csv(log: PourLog, path) -> None:
    names = list(COLUMNS) + [c for c in log.columns if c not in COLUMNS]
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for i in range(len(log)):
                w.writerow([_fmt(n, log.columns[n][i]) for n in names])
    except OSError as exc:
        raise IoError(str(exc), path) from exc


def read_csv(path, meta=None) -> PourLog:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
    except (OSError, StopIteration) as exc:
        raise IoError(f"cannot read pour log: {exc}", path) from exc
    missing = [c for c in COLUMNS if c not in header]
    if missing:
        raise InputError(f"{path}: missing columns {missing}")
    data = np.array(rows, dtype=object).reshape(len(rows), len(header))
    cols = {}
    for k, name in enumerate(header):
        dtype = np.int64 if name in _INT_COLUMNS else np.float64
        cols[name] = data[:, k].astype(dtype) if len(rows) else np.zeros(0, dtype=dtype)
    return PourLog(cols, dict(meta or {}))


def write_observations(obs: np.ndarray, path) -> None:
    obs = np.asarray(obs, dtype=bool)
    np.savez_compressed(path, bits=np.packbits(obs, axis=1), n_inner=obs.shape[1])


def read_observations(path) -> np.ndarray:
    try:
        with np.load(path) as data:
            n = int(data["n_inner"])
            return np.unpackbits(data["bits"], axis=1, count=n).astype(bool)
    except (OSError, KeyError, ValueError) as exc:
        raise IoError(f"cannot read observations: {exc}", path) from exc


def load_dataset_log(directory, entry) -> PourLog:
    """Load one manifest entry (CSV plus optional observations)."""
    directory = Path(directory)
    log = read_csv(directory / entry["csv"], meta=entry)
    if entry.get("observations"):
        log.observations = read_observations(directory / entry["observations"])
    return log
