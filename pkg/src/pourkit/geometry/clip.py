"""Horizontal-plane clipping, fill volume and fill height."""
from __future__ import annotations

import numpy as np

from ..errors import InputError, VolumeOutOfRange
from .mesh import TriMesh, ensure_closed, signed_volume

DEFAULT_FILL_TOL = 1e-7  # m^3, i.e. 0.1 ml


def _cut_points(mesh: TriMesh, i: np.ndarray, j: np.ndarray, height: float) -> np.ndarray:
    # Edge endpoints are ordered by vertex index so both triangles sharing an
    # edge produce a bit-identical cut point.
    lo, hi = np.minimum(i, j), np.maximum(i, j)
    p, q = mesh.vertices[lo], mesh.vertices[hi]
    t = (height - p[:, 2]) / (q[:, 2] - p[:, 2])
    pts = p + t[:, None] * (q - p)
    pts[:, 2] = height
    on_p = p[:, 2] == height
    on_q = q[:, 2] == height
    pts[on_p] = p[on_p]
    pts[on_q] = q[on_q]
    return pts


def _clip_soup(mesh: TriMesh, height: float) -> np.ndarray:
    """Triangles (n, 3, 3) of the closed region z < height.

    Kept and cut faces preserve the input winding; the cross-section is
    capped with a fan of triangles around a point on the plane, each fan
    triangle using a cut segment in reverse so the cap faces +z.
    """
    tris = mesh.triangles
    z = mesh.vertices[:, 2][tris]
    below = z < height
    nb = below.sum(axis=1)
    parts = [mesh.vertices[tris[nb == 3]]]
    seg_a, seg_b = [], []

    one = np.flatnonzero(nb == 1)
    if len(one):
        # rotate each face so the single below vertex comes first
        shift = np.argmax(below[one], axis=1)
        order = (shift[:, None] + np.arange(3)) % 3
        t = np.take_along_axis(tris[one], order, axis=1)
        a = mesh.vertices[t[:, 0]]
        p_ab = _cut_points(mesh, t[:, 0], t[:, 1], height)
        p_ac = _cut_points(mesh, t[:, 0], t[:, 2], height)
        parts.append(np.stack([a, p_ab, p_ac], axis=1))
        seg_a.append(p_ac)
        seg_b.append(p_ab)

    two = np.flatnonzero(nb == 2)
    if len(two):
        # rotate each face so the single above vertex comes first
        shift = np.argmin(below[two], axis=1)
        order = (shift[:, None] + np.arange(3)) % 3
        t = np.take_along_axis(tris[two], order, axis=1)
        b = mesh.vertices[t[:, 1]]
        c = mesh.vertices[t[:, 2]]
        p_ab = _cut_points(mesh, t[:, 0], t[:, 1], height)
        p_ca = _cut_points(mesh, t[:, 2], t[:, 0], height)
        parts.append(np.stack([p_ab, b, c], axis=1))
        parts.append(np.stack([p_ab, c, p_ca], axis=1))
        seg_a.append(p_ab)
        seg_b.append(p_ca)

    if seg_a:
        sa, sb = np.concatenate(seg_a), np.concatenate(seg_b)
        center = np.concatenate([sa, sb]).mean(axis=0)
        center[2] = height
        parts.append(np.stack([np.broadcast_to(center, sa.shape), sa, sb], axis=1))
    return np.concatenate(parts) if parts else np.zeros((0, 3, 3))


def clip_below(mesh: TriMesh, height: float) -> TriMesh:
    """Closed mesh of the part of ``mesh`` below a horizontal plane.

    Coincident points are welded, so the result passes the watertightness
    check whenever the cut is non-empty. Validation is skipped because
    vertices lying exactly on the plane can leave zero-area slivers.
    """
    soup = _clip_soup(mesh, height)
    if len(soup) == 0:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), f"{mesh.name}@{height:g}", validate=False)
    points, inverse = np.unique(soup.reshape(-1, 3), axis=0, return_inverse=True)
    return TriMesh(points, inverse.reshape(-1, 3), f"{mesh.name}@{height:g}", validate=False)


def volume_below_plane(mesh: TriMesh, height: float) -> float:
    """Interior volume (m^3) of ``mesh`` under the horizontal plane z = height."""
    ensure_closed(mesh)
    zmin, zmax = mesh.z_range
    if height <= zmin:
        return 0.0
    if height >= zmax:
        return signed_volume(mesh.tri_points)
    return signed_volume(_clip_soup(mesh, height))


def fill_height(mesh: TriMesh, target_volume: float, tol: float = DEFAULT_FILL_TOL) -> float:
    """Liquid surface height for ``target_volume`` m^3 by bisection on [min z, max z]."""
    if tol <= 0:
        raise InputError("tol must be positive")
    capacity = volume_below_plane(mesh, np.inf)
    if target_volume < 0 or target_volume > capacity:
        raise VolumeOutOfRange(
            f"{target_volume * 1e6:.6g} ml outside [0, {capacity * 1e6:.6g}] ml for {mesh.name}"
        )
    lo, hi = mesh.z_range
    if target_volume <= tol:
        return lo
    if capacity - target_volume <= tol:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        v = volume_below_plane(mesh, mid)
        if abs(v - target_volume) <= tol:
            return mid
        if v < target_volume:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 0:
            break
    return 0.5 * (lo + hi)


class HeightLookup:
    """Tabulated volume-to-height inversion for one mesh.

    Interpolates between precomputed plane heights, then refines by false
    position inside the bracketing cell until the volume is within ``tol``.
    Used where fill heights are needed every simulation tick.
    """

    def __init__(self, mesh: TriMesh, samples: int = 513, tol: float = DEFAULT_FILL_TOL):
        self.mesh = mesh
        self.tol = tol
        zmin, zmax = mesh.z_range
        self.heights = np.linspace(zmin, zmax, samples)
        vols = np.array([volume_below_plane(mesh, h) for h in self.heights])
        self.volumes = np.maximum.accumulate(vols)
        self.capacity = float(self.volumes[-1])

    def __call__(self, volume: float) -> float:
        if volume < 0 or volume > self.capacity + self.tol:
            raise VolumeOutOfRange(
                f"{volume * 1e6:.6g} ml outside [0, {self.capacity * 1e6:.6g}] ml for {self.mesh.name}"
            )
        hs, vs = self.heights, self.volumes
        if volume <= self.tol:
            return float(hs[0])
        if self.capacity - volume <= self.tol:
            return float(hs[-1])
        k = int(np.clip(np.searchsorted(vs, volume), 1, len(vs) - 1))
        h_lo, h_hi, v_lo, v_hi = hs[k - 1], hs[k], vs[k - 1], vs[k]
        for _ in range(60):
            if v_hi - v_lo <= 0:
                return float(h_lo)
            h = h_lo + (volume - v_lo) / (v_hi - v_lo) * (h_hi - h_lo)
            v = volume_below_plane(self.mesh, h)
            if abs(v - volume) <= self.tol:
                return float(h)
            if v < volume:
                h_lo, v_lo = h, v
            else:
                h_hi, v_hi = h, v
            mid = 0.5 * (h_lo + h_hi)
            vm = volume_below_plane(self.mesh, mid)
            if abs(vm - volume) <= self.tol:
                return float(mid)
            if vm < volume:
                h_lo, v_lo = mid, vm
            else:
                h_hi, v_hi = mid, vm
        return float(0.5 * (h_lo + h_hi))
