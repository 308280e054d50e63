from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DegenerateTriangle, MeshError, MeshLoadError, NonWatertightMesh

MIN_TRIANGLE_AREA = 1e-14  # m^2


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    v = vertices[triangles]
    return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)


def check_watertight(triangles: np.ndarray) -> None:
    """Raise NonWatertightMesh unless every edge borders exactly two faces
    with opposite directions (closed and consistently wound)."""
    tris = np.asarray(triangles, dtype=np.int64)
    if len(tris) == 0:
        raise NonWatertightMesh("mesh has no triangles")
    directed = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    undirected = np.sort(directed, axis=1)
    _, counts = np.unique(undirected, axis=0, return_counts=True)
    bad = np.count_nonzero(counts != 2)
    if bad:
        raise NonWatertightMesh(f"{bad} edge(s) not shared by exactly two triangles")
    _, dcounts = np.unique(directed, axis=0, return_counts=True)
    if np.any(dcounts != 1):
        raise NonWatertightMesh("inconsistent triangle winding across a shared edge")


def signed_volume(tri_points: np.ndarray) -> float:
    """Sum of signed tetrahedra (origin, a, b, c) over an (n, 3, 3) array."""
    if len(tri_points) == 0:
        return 0.0
    a, b, c = tri_points[:, 0], tri_points[:, 1], tri_points[:, 2]
    return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Closed triangle mesh of a container interior, in meters.

    Validated on construction unless ``validate=False`` (used for
    intermediate results such as clipped meshes, which may carry
    zero-area slivers where a vertex lies exactly on the cut plane).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    name: str = "mesh"
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        vertices = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        triangles = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        vertices.setflags(write=False)
        triangles.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)
        if not self.validate:
            return
        if len(triangles) and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise MeshError(f"{self.name}: vertex index out of range")
        if not np.all(np.isfinite(vertices)):
            raise MeshError(f"{self.name}: non-finite vertex coordinates")
        areas = triangle_areas(vertices, triangles)
        small = np.flatnonzero(areas < MIN_TRIANGLE_AREA)
        if len(small):
            raise DegenerateTriangle(
                f"{self.name}: triangle {int(small[0])} has area {areas[small[0]]:.3g} m^2"
            )
        check_watertight(triangles)
        if signed_volume(vertices[triangles]) <= 0:
            raise MeshError(f"{self.name}: signed volume is not positive (inward winding?)")

    @property
    def tri_points(self) -> np.ndarray:
        return self.vertices[self.triangles]

    @property
    def z_range(self) -> tuple[float, float]:
        z = self.vertices[:, 2]
        return float(z.min()), float(z.max())

    @property
    def bounding_sphere(self) -> tuple[np.ndarray, float]:
        lo, hi = self.vertices.min(axis=0), self.vertices.max(axis=0)
        center = 0.5 * (lo + hi)
        radius = float(np.linalg.norm(self.vertices - center, axis=1).max())
        return center, radius

    def transformed(self, rotation=None, translation=None, name=None) -> TriMesh:
        """Apply x -> R x + t for a proper rotation R.

        A rigid motion cannot break closure, winding or triangle areas, so a
        validated mesh stays validated without re-running the checks.
        """
        v = self.vertices
        if rotation is not None:
            rotation = np.asarray(rotation, dtype=np.float64)
            if abs(np.linalg.det(rotation) - 1.0) > 1e-9:
                raise MeshError("transform must be a proper rotation")
            v = v @ rotation.T
        if translation is not None:
            v = v + np.asarray(translation, dtype=np.float64)
        out = TriMesh(v, self.triangles, name or self.name, validate=False)
        object.__setattr__(out, "validate", self.validate)
        return out


def ensure_closed(mesh: TriMesh) -> None:
    # validated meshes were checked at construction
    if not mesh.validate:
        check_watertight(mesh.triangles)


def mesh_volume(mesh: TriMesh) -> float:
    """Enclosed volume in cubic meters."""
    ensure_closed(mesh)
    return signed_volume(mesh.tri_points)


def load_obj(path) -> TriMesh:
    """Read vertex (``v``) and triangular face (``f``) records from an OBJ file.

    Face tokens may carry ``/vt/vn`` suffixes; negative indices count back
    from the latest vertex as in the OBJ convention.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise MeshLoadError(str(exc), path=path) from exc
    vertices, triangles = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            if len(rest) < 3:
                raise MeshLoadError("vertex needs 3 coordinates", path, lineno)
            try:
                vertices.append([float(x) for x in rest[:3]])
            except ValueError:
                raise MeshLoadError(f"bad vertex coordinate in {raw!r}", path, lineno) from None
        elif tag == "f":
            if len(rest) != 3:
                raise MeshLoadError(f"only triangular faces are supported, got {len(rest)}", path, lineno)
            face = []
            for tok in rest:
                try:
                    idx = int(tok.split("/", 1)[0])
                except ValueError:
                    raise MeshLoadError(f"bad face index {tok!r}", path, lineno) from None
                idx = idx - 1 if idx > 0 else len(vertices) + idx
                if not 0 <= idx < len(vertices):
                    raise MeshLoadError(f"face index {tok} out of range", path, lineno)
                face.append(idx)
            triangles.append(face)
        # other records (vn, vt, o, g, s, usemtl, ...) carry nothing we need
    if not triangles:
        raise MeshLoadError("no faces found", path)
    try:
        return TriMesh(np.array(vertices), np.array(triangles), name=path.stem)
    except MeshError as exc:
        raise MeshLoadError(str(exc), path) from exc


def save_obj(mesh: TriMesh, path) -> None:
    lines = [f"# {mesh.name}"]
    lines += [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")
