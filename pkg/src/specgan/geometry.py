"""Triangle meshes, point clouds and the synthetic shape families used for testing."""

from dataclasses import dataclass

import numpy as np


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.faces) == 0:
            raise ValueError("mesh has no faces")
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise ValueError("face index out of range")

    def centroid(self):
        return self.vertices.mean(axis=0)

    def face_areas(self):
        v = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)


@dataclass
class PointCloud:
    """Unordered 3D points; ``indices`` optionally records the grid node of each point."""

    points: np.ndarray
    indices: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point coordinates must be finite")

    def __len__(self):
        return len(self.points)


def icosphere(subdivisions=3, radius=1.0):
    t = (1.0 + 5**0.5) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
             (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
             (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
             (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
             (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
             (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                mid = verts[a] + verts[b]
                verts.append(mid / np.linalg.norm(mid))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return TriangleMesh(radius * np.array(verts), np.array(faces))


def ellipsoid_mesh(axes, subdivisions=3, center=(0.0, 0.0, 0.0)):
    sphere = icosphere(subdivisions)
    return TriangleMesh(sphere.vertices * np.asarray(axes) + np.asarray(center), sphere.faces)


def box_mesh(half_extents=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)):
    h = np.asarray(half_extents, dtype=np.float64)
    corners = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=np.float64)
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = [tri for q in quads for tri in ((q[0], q[1], q[2]), (q[0], q[2], q[3]))]
    return TriangleMesh(corners * h + np.asarray(center), np.array(faces))


def box_radius(directions, half_extents):
    """Distance from the box centre to its surface along each unit direction."""
    d = np.abs(np.asarray(directions, dtype=np.float64))
    h = np.asarray(half_extents, dtype=np.float64)
    with np.errstate(divide="ignore"):
        ratios = np.where(d > 0, h / d, np.inf)
    return ratios.min(axis=-1)


def ellipsoid_radius(directions, axes):
    d = np.asarray(directions, dtype=np.float64)
    return 1.0 / np.sqrt(((d / np.asarray(axes)) ** 2).sum(axis=-1))


def sample_surface(mesh, count, rng):
    """Area-weighted uniform samples on the mesh surface."""
    areas = mesh.face_areas()
    face = rng.choice(len(areas), size=count, p=areas / areas.sum())
    u, v = rng.random(count), rng.random(count)
    flip = u + v > 1.0
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    tri = mesh.vertices[mesh.faces[face]]
    return PointCloud(tri[:, 0] + u[:, None] * (tri[:, 1] - tri[:, 0]) + v[:, None] * (tri[:, 2] - tri[:, 0]))


def sample_sphere(count, rng, radius=1.0):
    p = rng.normal(size=(count, 3))
    return PointCloud(radius * p / np.linalg.norm(p, axis=1, keepdims=True))


def random_ellipsoid_axes(rng, count, low=0.4, high=0.9):
    return rng.uniform(low, high, size=(count, 3))
