"""Histogram hidden Markov model over the liquid volume in the target.

Forward filtering gives the online estimate; Viterbi decoding gives the
offline most-probable volume trajectory used as ground truth. Beliefs are
plain probability vectors on a fixed grid of volume bins.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateBelief, DimensionMismatch, EmptyTrainingSet, InputError

NORM_TOL = 1e-12


@dataclass(frozen=True)
class HistogramSpec:
    """Equal-width bins over [0, v_max_ml]."""

    bins: int = 100
    v_max_ml: float = 400.0

    def __post_init__(self):
        if self.bins < 1 or self.v_max_ml <= 0:
            raise InputError("histogram needs at least one bin and a positive range")

    @property
    def width(self) -> float:
        return self.v_max_ml / self.bins

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, self.v_max_ml, self.bins + 1)

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.bins) + 0.5) * self.width

    def bin_of(self, volume_ml):
        """Index of the bin holding ``volume_ml``; out-of-range values clip."""
        idx = np.floor(np.asarray(volume_ml, dtype=np.float64) / self.width).astype(np.int64)
        return np.clip(idx, 0, self.bins - 1)


@dataclass(frozen=True, eq=False)
class VolumeHistogram:
    spec: HistogramSpec
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=np.float64)
        if p.shape != (self.spec.bins,):
            raise DimensionMismatch(f"expected {self.spec.bins} masses, got shape {p.shape}")
        if np.any(p < 0) or abs(p.sum() - 1.0) > NORM_TOL:
            raise InputError("histogram masses must be non-negative and sum to 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def point_mass(cls, spec: HistogramSpec, index: int = 0) -> VolumeHistogram:
        p = np.zeros(spec.bins)
        p[index] = 1.0
        return cls(spec, p)

    @classmethod
    def uniform(cls, spec: HistogramSpec) -> VolumeHistogram:
        return cls(spec, np.full(spec.bins, 1.0 / spec.bins))


@dataclass(frozen=True, eq=False)
class TransitionModel:
    """Row-stochastic matrix; ``matrix[i, j] = P(next bin j | bin i)``."""

    spec: HistogramSpec
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        n = self.spec.bins
        if m.shape != (n, n):
            raise DimensionMismatch(f"transition must be {n}x{n}, got {m.shape}")
        if np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1.0) > NORM_TOL):
            raise InputError("transition rows must be non-negative and sum to 1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def to_json(self) -> str:
        # repr-based floats are the shortest strings that round-trip exactly
        rows = [[float(x) for x in row] for row in self.matrix]
        return json.dumps({"bins": self.spec.bins, "v_max_ml": float(self.spec.v_max_ml), "rows": rows})

    @classmethod
    def from_json(cls, text: str) -> TransitionModel:
        try:
            data = json.loads(text)
            spec = HistogramSpec(int(data["bins"]), float(data["v_max_ml"]))
            return cls(spec, np.array(data["rows"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed transition model: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> TransitionModel:
        return cls.from_json(Path(path).read_text())


def _normalized(p: np.ndarray) -> np.ndarray:
    # a second pass pulls the sum to within an ulp or two of 1
    p = p / p.sum()
    return p / p.sum()


def predict(belief: VolumeHistogram, trans: TransitionModel) -> VolumeHistogram:
    if belief.spec.bins != trans.spec.bins:
        raise DimensionMismatch("belief and transition disagree on bin count")
    return VolumeHistogram(belief.spec, _normalized(belief.probs @ trans.matrix))


def update(belief: VolumeHistogram, loglik) -> VolumeHistogram:
    loglik = np.asarray(loglik, dtype=np.float64)
    if loglik.shape != belief.probs.shape:
        raise DimensionMismatch(f"likelihood shape {loglik.shape} != belief shape {belief.probs.shape}")
    if not np.all(np.isfinite(loglik)):
        raise InputError("log-likelihoods must be finite")
    with np.errstate(divide="ignore"):
        logpost = loglik + np.log(belief.probs)
    top = logpost.max()
    if not np.isfinite(top):
        raise DegenerateBelief("posterior has no support")
    post = np.exp(logpost - top)
    total = post.sum()
    if total <= 0 or not np.isfinite(total):
        raise DegenerateBelief("posterior mass underflowed")
    return VolumeHistogram(belief.spec, _normalized(post))


def median_estimate(belief: VolumeHistogram) -> float:
    """Center of the first bin whose cumulative mass reaches one half."""
    cdf = np.cumsum(belief.probs)
    # guard against a total of 1 - ulp never reaching 0.5 exactly in degenerate ties
    k = int(np.searchsorted(cdf, 0.5 - 1e-15, side="left"))
    return float(belief.spec.centers[min(k, belief.spec.bins - 1)])


def forward_filter(logliks, trans: TransitionModel, init: VolumeHistogram):
    """Filtered marginals for a sequence.

    ``init`` is the belief at the first observation; every later
    observation is preceded by one transition step.
    """
    belief = init
    out = []
    for t, ll in enumerate(logliks):
        if t:
            belief = predict(belief, trans)
        belief = update(belief, ll)
        out.append(belief)
    return out


def viterbi(logliks, trans: TransitionModel, init: VolumeHistogram) -> list[int]:
    """Most probable bin sequence under the same model as ``forward_filter``.

    Ties resolve to the lower bin index, both in the stored back-pointers
    and in the terminal state.
    """
    logliks = [np.asarray(ll, dtype=np.float64) for ll in logliks]
    if not logliks:
        raise EmptyTrainingSet("viterbi needs at least one observation")
    n = trans.spec.bins
    if init.spec.bins != n or any(ll.shape != (n,) for ll in logliks):
        raise DimensionMismatch("inconsistent bin counts")
    with np.errstate(divide="ignore"):
        log_t = np.log(trans.matrix)
        delta = np.log(init.probs) + logliks[0]
    back = []
    for ll in logliks[1:]:
        scores = delta[:, None] + log_t  # scores[i, j]: come from i, land in j
        arg = np.argmax(scores, axis=0)  # first maximum -> lowest index
        delta = scores[arg, np.arange(n)] + ll
        back.append(arg)
    state = int(np.argmax(delta))
    if not np.isfinite(delta[state]):
        raise DegenerateBelief("no path has positive probability")
    path = [state]
    for arg in reversed(back):
        state = int(arg[state])
        path.append(state)
    return path[::-1]


def path_log_prob(path, logliks, trans: TransitionModel, init: VolumeHistogram) -> float:
    """Joint log-probability of a state path and the observations."""
    with np.errstate(divide="ignore"):
        lp = np.log(init.probs[path[0]]) + logliks[0][path[0]]
        for t in range(1, len(path)):
            lp += np.log(trans.matrix[path[t - 1], path[t]]) + logliks[t][path[t]]
    return float(lp)


def fit_transition(volume_series, spec: HistogramSpec, smoothing: float = 1.0) -> TransitionModel:
    """Count bin-to-bin moves between consecutive ticks of ground-truth series.

    Only non-decreasing moves are allowed; ``smoothing`` pseudo-counts are
    spread over that support, and rows never visited keep all mass on
    staying put.
    """
    series = [np.asarray(s, dtype=np.float64) for s in volume_series]
    if not series or all(len(s) == 0 for s in series):
        raise EmptyTrainingSet("no training sequences")
    if smoothing < 0:
        raise InputError("smoothing must be non-negative")
    n = spec.bins
    counts = np.zeros((n, n))
    for s in series:
        b = spec.bin_of(s)
        if len(b) > 1:
            np.add.at(counts, (b[:-1], b[1:]), 1.0)
    mask = np.triu(np.ones((n, n)))
    counts *= mask
    visited = counts.sum(axis=1) > 0
    counts = counts + smoothing * mask * visited[:, None]
    rows = np.where(visited[:, None], counts, np.eye(n))
    return TransitionModel(spec, rows / rows.sum(axis=1, keepdims=True))


def drift_transition(spec: HistogramSpec, stay: float = 0.9, max_step: int = 5) -> TransitionModel:
    """Prior model used before any data exists: stay with probability ``stay``,
    otherwise move up by 1..max_step bins with geometrically decaying odds."""
    n = spec.bins
    m = np.zeros((n, n))
    steps = 0.5 ** np.arange(max_step)
    for i in range(n):
        j = np.arange(i + 1, min(n, i + 1 + max_step))
        if len(j) == 0:
            m[i, i] = 1.0
            continue
        w = steps[: len(j)]
        m[i, i] = stay
        m[i, j] = (1 - stay) * w / w.sum()
    return TransitionModel(spec, m)
