"""Pixel-count baseline: regress volume on the number of liquid pixels.

A stand-in for a learned, model-free volume estimator. Its output is
turned into a per-bin Gaussian likelihood so it drops into the same HMM
as the geometric observation model.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError, InsufficientData
from .hmm import HistogramSpec

SIGMA_FLOOR_ML = 2.0


def isotonic_fit(x, y, weights=None):
    """Pool-adjacent-violators fit of a non-decreasing step function.

    Returns the sorted unique ``x`` values and the fitted value at each.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64)
    ux, inv = np.unique(x, return_inverse=True)
    sw = np.bincount(inv, weights=w)
    sy = np.bincount(inv, weights=w * y)
    # blocks as [mean, weight, count]
    means, wts, counts = [], [], []
    for m, ww in zip(sy / sw, sw):
        means.append(m)
        wts.append(ww)
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, c2 = means.pop(), wts.pop(), counts.pop()
            m1, w1, c1 = means.pop(), wts.pop(), counts.pop()
            means.append((m1 * w1 + m2 * w2) / (w1 + w2))
            wts.append(w1 + w2)
            counts.append(c1 + c2)
    fitted = np.repeat(means, counts)
    return ux, fitted


@dataclass(frozen=True, eq=False)
class PixelCountRegressor:
    counts: np.ndarray  # breakpoints, strictly increasing
    volumes_ml: np.ndarray  # non-decreasing
    sigma_ml: float

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.float64)
        v = np.asarray(self.volumes_ml, dtype=np.float64)
        if c.shape != v.shape or len(c) == 0:
            raise InputError("breakpoints need matching count and volume arrays")
        if np.any(np.diff(c) <= 0) or np.any(np.diff(v) < 0):
            raise InputError("breakpoints must be increasing in count and non-decreasing in volume")
        if not self.sigma_ml > 0:
            raise InputError("sigma must be positive")
        object.__setattr__(self, "counts", c)
        object.__setattr__(self, "volumes_ml", v)

    def __call__(self, count):
        return np.interp(count, self.counts, self.volumes_ml)

    def to_json(self) -> str:
        pts = [[float(c), float(v)] for c, v in zip(self.counts, self.volumes_ml)]
        return json.dumps({"breakpoints": pts, "sigma_ml": float(self.sigma_ml)})

    @classmethod
    def from_json(cls, text: str) -> PixelCountRegressor:
        try:
            data = json.loads(text)
            pts = np.asarray(data["breakpoints"], dtype=np.float64).reshape(-1, 2)
            return cls(pts[:, 0], pts[:, 1], float(data["sigma_ml"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed regressor: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> PixelCountRegressor:
        return cls.from_json(Path(path).read_text())


def save_regressors(regressors: dict, path) -> None:
    """One regressor per container: ``{"containers": {name: regressor}}``."""
    data = {"containers": {k: json.loads(r.to_json()) for k, r in sorted(regressors.items())}}
    Path(path).write_text(json.dumps(data) + "\n")


def load_regressors(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
        return {k: PixelCountRegressor.from_json(json.dumps(v)) for k, v in data["containers"].items()}
    except (KeyError, TypeError, AttributeError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: malformed regressor file: {exc}") from exc


def _drop_collinear(x, y):
    keep = [0]
    for i in range(1, len(x) - 1):
        a, b = keep[-1], i + 1
        # point i is redundant if its neighbours already interpolate to it
        interp = y[a] + (y[b] - y[a]) * (x[i] - x[a]) / (x[b] - x[a])
        if abs(interp - y[i]) > 1e-12 * max(1.0, abs(y[i])):
            keep.append(i)
    keep.append(len(x) - 1)
    return x[keep], y[keep]


def fit_count_map(counts, volumes_ml) -> PixelCountRegressor:
    """Isotonic least-squares map from liquid-pixel count to volume.

    The fitted values at the distinct counts become the breakpoints of a
    piecewise-linear map; residual spread sets the likelihood width.
    """
    counts = np.asarray(counts, dtype=np.float64).ravel()
    volumes = np.asarray(volumes_ml, dtype=np.float64).ravel()
    if len(np.unique(counts)) < 2:
        raise InsufficientData("need at least two distinct pixel counts")
    x, y = isotonic_fit(counts, volumes)
    x, y = _drop_collinear(x, y)
    resid = volumes - np.interp(counts, x, y)
    sigma = max(SIGMA_FLOOR_ML, math.sqrt(float(np.mean(resid**2))))
    return PixelCountRegressor(x, y, sigma)


def fit_regressor(logs, truth_column: str = "tgt_ml") -> PixelCountRegressor:
    """Fit on every tick of every log: ``liq_px`` against the truth column."""
    logs = list(logs)
    if not logs:
        raise InsufficientData("no logs to fit")
    counts = np.concatenate([log["liq_px"] for log in logs])
    volumes = np.concatenate([log[truth_column] for log in logs])
    return fit_count_map(counts, volumes)


def regressor_loglik(count, regressor: PixelCountRegressor, spec: HistogramSpec) -> np.ndarray:
    """Gaussian log-density of each bin center around the regressed volume."""
    mu = float(regressor(count))
    z = (spec.centers - mu) / regressor.sigma_ml
    return -0.5 * z * z - math.log(regressor.sigma_ml * math.sqrt(2 * math.pi))


def _ranks(a):
    """Ranks starting at 1, ties sharing their average rank."""
    a = np.asarray(a, dtype=np.float64)
    order = np.argsort(a, kind="stable")
    sorted_a = a[order]
    ranks = np.empty(len(a))
    # group equal values
    starts = np.flatnonzero(np.r_[True, sorted_a[1:] != sorted_a[:-1]])
    ends = np.r_[starts[1:], len(a)]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = 0.5 * (s + e - 1) + 1.0
    return ranks


def spearman(a, b) -> float:
    """Spearman rank correlation (Pearson correlation of tie-averaged ranks)."""
    ra, rb = _ranks(a), _ranks(b)
    if len(ra) != len(rb) or len(ra) < 2:
        raise InputError("spearman needs two equal-length samples of size >= 2")
    ra -= ra.mean()
    rb -= rb.mean()
    denom = math.sqrt(float(ra @ ra) * float(rb @ rb))
    return float(ra @ rb / denom) if denom > 0 else float("nan")
