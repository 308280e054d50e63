"""Procedural closed meshes: analytic fixtures and container interiors."""
from __future__ import annotations

import numpy as np

from .mesh import TriMesh


def box(size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), name="box") -> TriMesh:
    """Axis-aligned box with its minimum corner at ``origin``; 12 triangles."""
    sx, sy, sz = size
    ox, oy, oz = origin
    v = np.array(
        [[x, y, z] for z in (0, sz) for y in (0, sy) for x in (0, sx)], dtype=np.float64
    ) + [ox, oy, oz]
    # vertex k = x + 2y + 4z (bits)
    quads = [
        (0, 2, 3, 1),  # bottom, -z
        (4, 5, 7, 6),  # top, +z
        (0, 1, 5, 4),  # -y
        (2, 6, 7, 3),  # +y
        (0, 4, 6, 2),  # -x
        (1, 3, 7, 5),  # +x
    ]
    tris = []
    for a, b, c, d in quads:
        tris += [(a, b, c), (a, c, d)]
    return TriMesh(v, np.array(tris), name)


def cube(side=1.0, name="cube") -> TriMesh:
    return box((side, side, side), name=name)


def tetrahedron(name="tetrahedron") -> TriMesh:
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=np.float64)
    return TriMesh(v, np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]]), name)


def _revolve(rings, segments, name) -> TriMesh:
    """Closed surface of revolution about +z from (radius, z) rings listed
    bottom to top. The bottom and top rings are closed by center fans."""
    rings = np.asarray(rings, dtype=np.float64)
    ang = 2 * np.pi * np.arange(segments) / segments
    verts = []
    for r, z in rings:
        verts.append(np.column_stack([r * np.cos(ang), r * np.sin(ang), np.full(segments, z)]))
    verts = np.concatenate(verts)
    bottom_c = len(verts)
    top_c = bottom_c + 1
    verts = np.vstack([verts, [0, 0, rings[0, 1]], [0, 0, rings[-1, 1]]])
    tris = []
    k = np.arange(segments)
    kn = (k + 1) % segments
    for ring in range(len(rings) - 1):
        lo, hi = ring * segments, (ring + 1) * segments
        tris += list(zip(lo + k, lo + kn, hi + kn))
        tris += list(zip(lo + k, hi + kn, hi + k))
    top = (len(rings) - 1) * segments
    tris += list(zip(np.full(segments, bottom_c), kn, k))
    tris += list(zip(np.full(segments, top_c), top + k, top + kn))
    return TriMesh(verts, np.array(tris), name)


def cylinder(radius=1.0, height=1.0, segments=64, name="cylinder") -> TriMesh:
    return _revolve([(radius, 0.0), (radius, height)], segments, name)


def frustum(bottom_radius, top_radius, height, segments=64, name="frustum") -> TriMesh:
    return _revolve([(bottom_radius, 0.0), (top_radius, height)], segments, name)


def revolved_profile(profile, segments=64, name="vessel") -> TriMesh:
    """Container from a wall profile of (radius, z) points, bottom to top."""
    return _revolve(profile, segments, name)


def polygon_area(radius, segments) -> float:
    """Area of the regular polygon the revolved meshes use for a circle."""
    return 0.5 * segments * radius**2 * np.sin(2 * np.pi / segments)


def prism(base, height, name="prism") -> TriMesh:
    """Right prism over a counter-clockwise convex polygon ``base`` (x, y)."""
    base = np.asarray(base, dtype=np.float64)
    n = len(base)
    v = np.vstack([np.column_stack([base, np.zeros(n)]), np.column_stack([base, np.full(n, height)])])
    tris = []
    for i in range(1, n - 1):
        tris.append((0, i + 1, i))
        tris.append((n, n + i, n + i + 1))
    for i in range(n):
        j = (i + 1) % n
        tris += [(i, j, n + j), (i, n + j, n + i)]
    return TriMesh(v, np.array(tris), name)


def icosphere(radius=1.0, subdivisions=2, name="icosphere") -> TriMesh:
    t = (1 + 5**0.5) / 2
    v = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    f = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in v]
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        f = nf
    return TriMesh(np.array(verts) * radius, np.array(f), name)
