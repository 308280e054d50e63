"""Ray casting against triangle meshes, and inner/outer pixel classification."""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .camera import CameraModel, Ray
from ..errors import InputError
from .mesh import TriMesh

_DET_EPS = 1e-15
_T_EPS = 1e-12
RIM_TOL = 1e-9  # m


def intersect_rays(origins, directions, tri_points, chunk=1024):
    """First positive hit of each ray against a triangle set.

    Möller–Trumbore test, two-sided. Returns ``(t, index)`` arrays where
    misses carry ``t = inf`` and ``index = -1``. Ties resolve to the lower
    triangle index.
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    n = len(directions)
    origins = np.broadcast_to(origins, (n, 3))
    t_best = np.full(n, np.inf)
    i_best = np.full(n, -1, dtype=np.int64)
    if len(tri_points) == 0 or n == 0:
        return t_best, i_best
    v0 = tri_points[:, 0]
    e1 = tri_points[:, 1] - v0
    e2 = tri_points[:, 2] - v0
    for s in range(0, n, chunk):
        o = origins[s : s + chunk, None, :]
        d = directions[s : s + chunk, None, :]
        p = np.cross(d, e2)
        det = np.einsum("rtk,tk->rt", p, e1)
        ok = np.abs(det) > _DET_EPS
        inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
        tvec = o - v0
        u = np.einsum("rtk,rtk->rt", tvec, p) * inv
        q = np.cross(tvec, e1)
        v = np.einsum("rtk,rtk->rt", np.broadcast_to(d, q.shape), q) * inv
        t = np.einsum("rtk,tk->rt", q, e2) * inv
        hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > _T_EPS)
        t = np.where(hit, t, np.inf)
        idx = np.argmin(t, axis=1)
        tb = t[np.arange(len(idx)), idx]
        t_best[s : s + chunk] = tb
        i_best[s : s + chunk] = np.where(np.isfinite(tb), idx, -1)
    return t_best, i_best


def ray_first_hit(mesh: TriMesh, ray: Ray) -> float | None:
    """Distance along ``ray`` to the nearest triangle, or None."""
    t, _ = intersect_rays(ray.origin, ray.direction, mesh.tri_points)
    return float(t[0]) if np.isfinite(t[0]) else None


def rim_cap_triangles(mesh: TriMesh) -> np.ndarray:
    """Boolean mask of the planar, upward-facing faces at the mesh top.

    These faces close the container opening; rays entering through them
    look into the cavity.
    """
    pts = mesh.tri_points
    zmax = mesh.z_range[1]
    flat_top = np.all(pts[:, :, 2] >= zmax - RIM_TOL, axis=1)
    normals = np.cross(pts[:, 1] - pts[:, 0], pts[:, 2] - pts[:, 0])
    up = normals[:, 2] > 0
    return flat_top & up


class Region(IntEnum):
    NEITHER = 0
    INNER = 1
    OUTER = 2


@dataclass(frozen=True, eq=False)
class RegionMask:
    labels: np.ndarray  # (height, width) uint8 of Region values

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.uint8)
        if labels.ndim != 2 or not np.isin(labels, [r.value for r in Region]).all():
            raise InputError("region mask must be 2-D with values in {0, 1, 2}")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def shape(self):
        return self.labels.shape

    @property
    def inner(self) -> np.ndarray:
        return self.labels == Region.INNER

    @property
    def n_inner(self) -> int:
        return int(np.count_nonzero(self.inner))

    def __eq__(self, other):
        return isinstance(other, RegionMask) and np.array_equal(self.labels, other.labels)

    __hash__ = None


class ViewGeometry:
    """Per-pixel ray cast of one camera against one container mesh.

    Holds the region mask plus, for inner pixels, the ray parameters needed
    to decide plane-versus-wall visibility at any fill height without
    re-casting rays.
    """

    def __init__(self, camera: CameraModel, mesh: TriMesh):
        self.camera = camera
        self.mesh = mesh
        dirs = camera.pixel_directions().reshape(-1, 3)
        origin = camera.position
        labels = np.zeros(len(dirs), dtype=np.uint8)

        center, radius = mesh.bounding_sphere
        oc = origin - center
        b = dirs @ oc
        disc = b * b - (oc @ oc - radius * radius)
        near = (disc >= 0) & ((-b + np.sqrt(np.maximum(disc, 0))) > 0)
        cand = np.flatnonzero(near)

        is_cap = rim_cap_triangles(mesh)
        t_all, i_all = intersect_rays(origin, dirs[cand], mesh.tri_points)
        hit = i_all >= 0
        entering = hit & is_cap[np.maximum(i_all, 0)] & (dirs[cand, 2] < 0)
        labels[cand[hit]] = Region.OUTER
        labels[cand[entering]] = Region.INNER

        inner_idx = cand[entering]
        walls = mesh.tri_points[~is_cap]
        t_wall, _ = intersect_rays(origin, dirs[inner_idx], walls)
        self.mask = RegionMask(labels.reshape(camera.shape))
        self.inner_index = inner_idx  # flat pixel indices, row-major
        self.inner_dirs = dirs[inner_idx]
        self.t_wall = t_wall
        self.t_cap = t_all[entering]

    @property
    def n_inner(self) -> int:
        return len(self.inner_index)

    def plane_first(self, height: float, tie_tol: float = 1e-9) -> np.ndarray:
        """For each inner pixel, whether its ray meets the plane z = height
        strictly before the container wall. Ties go to the wall."""
        dz = self.inner_dirs[:, 2]
        t_plane = (height - self.camera.position[2]) / dz
        return (t_plane > 0) & (t_plane < self.t_wall - tie_tol)


def classify_pixels(camera: CameraModel, mesh: TriMesh) -> RegionMask:
    return ViewGeometry(camera, mesh).mask
