"""Expected liquid labels for a hypothesized fill and their likelihood.

Pixels are treated as conditionally independent given the volume, so a
label map scores as a sum of per-pixel log-probabilities. Only pixels that
view the container cavity (inner pixels) take part. Scores are computed
from four integer counts per bin, which makes them independent of pixel
order down to the last bit.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CacheMismatch, DimensionMismatch, InputError, VolumeOutOfRange
from .geometry import CameraModel, HeightLookup, RegionMask, TriMesh, ViewGeometry, fill_height
from .geometry.raycast import Region
from .hmm import HistogramSpec

ML = 1e-6  # m^3 per ml


@dataclass(frozen=True)
class ConfusionTable:
    """P(observed label | expected label) for the liquid detector."""

    liquid_given_liquid: float = 0.90
    not_liquid_given_liquid: float = 0.10
    liquid_given_not_liquid: float = 0.20
    not_liquid_given_not_liquid: float = 0.80

    def __post_init__(self):
        vals = [
            self.liquid_given_liquid,
            self.not_liquid_given_liquid,
            self.liquid_given_not_liquid,
            self.not_liquid_given_not_liquid,
        ]
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise InputError("confusion probabilities must lie in [0, 1]")
        if abs(vals[0] + vals[1] - 1.0) > 1e-12 or abs(vals[2] + vals[3] - 1.0) > 1e-12:
            raise InputError("confusion rows must sum to 1")

    @classmethod
    def from_rates(cls, liquid_given_liquid, liquid_given_not_liquid):
        return cls(
            liquid_given_liquid,
            1.0 - liquid_given_liquid,
            liquid_given_not_liquid,
            1.0 - liquid_given_not_liquid,
        )

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 0.0, 1.0)

    def log_terms(self) -> np.ndarray:
        """log P for (obs, exp) = (L, L), (N, L), (L, N), (N, N)."""
        with np.errstate(divide="ignore"):
            return np.log(
                [
                    self.liquid_given_liquid,
                    self.not_liquid_given_liquid,
                    self.liquid_given_not_liquid,
                    self.not_liquid_given_not_liquid,
                ]
            )


@dataclass(frozen=True, eq=False)
class PixelLabelMap:
    labels: np.ndarray  # (height, width) bool, True = liquid
    mask: RegionMask

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=bool)
        if labels.shape != self.mask.shape:
            raise DimensionMismatch(f"labels {labels.shape} vs mask {self.mask.shape}")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def inner_labels(self) -> np.ndarray:
        return self.labels[self.mask.inner]

    @property
    def liquid_count(self) -> int:
        return int(np.count_nonzero(self.inner_labels))


def binarize(heatmap, mask: RegionMask, threshold: float = 0.5) -> PixelLabelMap:
    """Detector heatmap to labels; only inner pixels can be liquid."""
    heat = np.asarray(heatmap, dtype=np.float64)
    return PixelLabelMap((heat >= threshold) & mask.inner, mask)


@functools.lru_cache(maxsize=32)
def view_geometry(camera: CameraModel, mesh: TriMesh) -> ViewGeometry:
    return ViewGeometry(camera, mesh)


class Scene:
    """A target container seen by a fixed camera.

    Bundles the ray cast and a fill-height table so expected label maps at
    arbitrary volumes are cheap.
    """

    def __init__(self, camera: CameraModel, mesh: TriMesh):
        self.camera = camera
        self.mesh = mesh
        self.view = view_geometry(camera, mesh)
        self.heights = HeightLookup(mesh)

    @property
    def mask(self) -> RegionMask:
        return self.view.mask

    @property
    def capacity_ml(self) -> float:
        return self.heights.capacity / ML

    def inner_expected(self, volume_m3: float) -> np.ndarray:
        return self.view.plane_first(self.heights(volume_m3))

    def to_map(self, inner_labels: np.ndarray) -> PixelLabelMap:
        flat = np.zeros(self.camera.width * self.camera.height, dtype=bool)
        flat[self.view.inner_index] = inner_labels
        return PixelLabelMap(flat.reshape(self.camera.shape), self.mask)


def expected_labels(camera: CameraModel, mesh: TriMesh, volume: float) -> PixelLabelMap:
    """Labels each inner pixel would carry if ``mesh`` held ``volume`` m^3 at rest."""
    view = view_geometry(camera, mesh)
    height = fill_height(mesh, volume)
    flat = np.zeros(camera.width * camera.height, dtype=bool)
    flat[view.inner_index] = view.plane_first(height)
    return PixelLabelMap(flat.reshape(camera.shape), view.mask)


def _loglik_from_counts(n_ll, n_nl, n_ln, n_nn, table: ConfusionTable):
    terms = table.log_terms()
    parts = [n_ll * terms[0], n_nl * terms[1], n_ln * terms[2], n_nn * terms[3]]
    # 0 * log(0) means "no such pixels", not -inf
    return sum(np.where(np.asarray(n) == 0, 0.0, p) for n, p in zip([n_ll, n_nl, n_ln, n_nn], parts))


def observation_loglik(obs: PixelLabelMap, expected: PixelLabelMap, table: ConfusionTable) -> float:
    if obs.labels.shape != expected.labels.shape or obs.mask != expected.mask:
        raise DimensionMismatch("observation and expectation differ in shape or region mask")
    o = obs.inner_labels
    e = expected.inner_labels
    n_ll = int(np.count_nonzero(o & e))
    n_nl = int(np.count_nonzero(~o & e))
    n_ln = int(np.count_nonzero(o & ~e))
    n_nn = len(o) - n_ll - n_nl - n_ln
    with np.errstate(invalid="ignore"):
        return float(_loglik_from_counts(n_ll, n_nl, n_ln, n_nn, table))


class ExpectedLabelCache:
    """Fill heights and expected inner-pixel labels for every histogram bin,
    evaluated at bin centers."""

    def __init__(self, scene: Scene, spec: HistogramSpec):
        if spec.v_max_ml * ML > scene.heights.capacity * (1 + 1e-9):
            raise VolumeOutOfRange(
                f"histogram reaches {spec.v_max_ml} ml but {scene.mesh.name} holds {scene.capacity_ml:.1f} ml"
            )
        self.scene = scene
        self.spec = spec
        self.heights = np.array([fill_height(scene.mesh, v * ML) for v in spec.centers])
        self.maps = np.stack([scene.view.plane_first(h) for h in self.heights])  # (bins, n_inner)
        self._maps_i = self.maps.astype(np.int64)
        self._liquid = self._maps_i.sum(axis=1)

    def __len__(self):
        return self.spec.bins

    def __getitem__(self, i) -> PixelLabelMap:
        return self.scene.to_map(self.maps[i])

    def profile_from_inner(self, inner_obs: np.ndarray, table: ConfusionTable) -> np.ndarray:
        o = np.asarray(inner_obs, dtype=np.int64)
        n = len(o)
        n_obs = int(o.sum())
        n_ll = self._maps_i @ o
        n_nl = self._liquid - n_ll
        n_ln = n_obs - n_ll
        n_nn = n - self._liquid - n_ln
        with np.errstate(invalid="ignore"):
            return _loglik_from_counts(n_ll, n_nl, n_ln, n_nn, table)


def likelihood_profile(obs: PixelLabelMap, cache: ExpectedLabelCache, table: ConfusionTable) -> np.ndarray:
    """Log P(observation | volume bin) for every bin of the cache."""
    if obs.mask != cache.scene.mask:
        raise CacheMismatch("observation was not taken with the cache's camera and container")
    return cache.profile_from_inner(obs.inner_labels, table)


PGM_LIQUID, PGM_NOT_LIQUID, PGM_OUTSIDE = 255, 0, 128


def write_pgm(label_map: PixelLabelMap, path) -> None:
    img = np.full(label_map.labels.shape, PGM_OUTSIDE, dtype=np.uint8)
    inner = label_map.mask.inner
    img[inner] = np.where(label_map.labels[inner], PGM_LIQUID, PGM_NOT_LIQUID)
    h, w = img.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + img.tobytes())


def read_pgm(path) -> PixelLabelMap:
    """Inverse of ``write_pgm``. Outer and neither pixels both read back as
    neither, since the file does not distinguish them."""
    data = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise InputError(f"{path}: not a binary PGM")
    w, h, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise InputError(f"{path}: expected maxval 255, got {maxval}")
    img = np.frombuffer(data[pos + 1 : pos + 1 + w * h], dtype=np.uint8).reshape(h, w)
    if not np.isin(img, [PGM_LIQUID, PGM_NOT_LIQUID, PGM_OUTSIDE]).all():
        raise InputError(f"{path}: unexpected pixel values")
    regions = np.where(img == PGM_OUTSIDE, Region.NEITHER, Region.INNER).astype(np.uint8)
    return PixelLabelMap(img == PGM_LIQUID, RegionMask(regions))
