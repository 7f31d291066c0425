"""Polar sampling of meshes and point clouds onto the equiangular grid.

Meshes are sampled in two stages. Stage one casts rays from the vertex
centroid along the even azimuth columns and keeps the first surface hit;
stage two uses the odd columns, i.e. rays rotated by half a stage-one
azimuth step, and keeps the last hit. Together they fill one 2M x 2M grid.
"""

import logging
import warnings

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointCloud, TriangleMesh
from .kernels import raycast
from .sh_core import dh_grid, grid_directions

log = logging.getLogger(__name__)

NORMALIZED_RADIUS = 0.95
NON_POLAR_MISS_FRACTION = 0.30
MAX_UNFILLED_FRACTION = 0.20


class DegenerateMeshError(ValueError):
    pass


class SparseCloudError(ValueError):
    pass


def normalize_mesh(mesh):
    """Move the vertex centroid to the origin and scale the farthest vertex to radius 0.95."""
    centered = mesh.vertices - mesh.centroid()
    extent = np.linalg.norm(centered, axis=1).max()
    if not extent > 0:
        raise DegenerateMeshError("all mesh vertices coincide")
    return TriangleMesh(centered * (NORMALIZED_RADIUS / extent), mesh.faces.copy())


def raycast_sample(mesh, bandlimit, eps=1e-9):
    """Two-stage ray casting into a SphericalGrid of shape (2M, 2M).

    Expects a normalized mesh (origin inside the shape). Directions that hit
    nothing get radius 0 and are counted in ``grid.misses``.
    """
    grid = dh_grid(bandlimit)
    n = 2 * bandlimit
    dirs = grid_directions(bandlimit).reshape(n, n, 3)
    first, _ = raycast(mesh.vertices, mesh.faces, dirs[:, 0::2].reshape(-1, 3), eps)
    _, last = raycast(mesh.vertices, mesh.faces, dirs[:, 1::2].reshape(-1, 3), eps)
    radii = np.empty((n, n))
    radii[:, 0::2] = first.reshape(n, bandlimit)
    radii[:, 1::2] = last.reshape(n, bandlimit)
    missed = np.isnan(radii)
    radii[missed] = 0.0
    grid.radii = radii
    grid.misses = int(missed.sum())
    if grid.misses:
        log.info("raycast: %d of %d rays missed", grid.misses, n * n)
    return grid


def is_polar(grid):
    return grid.misses <= NON_POLAR_MISS_FRACTION * grid.radii.size


def grid_to_pointcloud(grid):
    """Cartesian points for every node with positive radius.

    Non-positive radii carry no surface point and are dropped; the flat node
    index of each kept point is stored in ``cloud.indices``.
    """
    r = grid.radii.ravel()
    keep = np.flatnonzero(r > 0)
    if keep.size == 0:
        warnings.warn("grid has no positive radii; point cloud is empty", stacklevel=2)
    dirs = grid_directions(grid.bandlimit)
    return PointCloud(dirs[keep] * r[keep, None], indices=keep)


def _canonical_order(points):
    # lexicographic sort makes every downstream step independent of input order
    order = np.lexsort((points[:, 2], points[:, 1], points[:, 0]))
    return points[order]


def pointcloud_to_grid(cloud, bandlimit):
    """Angular nearest-neighbour resampling of a point cloud onto the grid.

    A node takes the radius of the point closest to it in angle, provided that
    point lies within ``pi / M`` radians; remaining nodes are filled by
    repeatedly averaging filled 4-neighbours. More than 20% unfilled nodes is
    an error.
    """
    pts = np.asarray(cloud.points, dtype=np.float64)
    if len(pts) == 0:
        raise SparseCloudError("empty point cloud")
    pts = _canonical_order(pts)
    radius = np.linalg.norm(pts, axis=1)
    nz = radius > 0
    pts, radius = pts[nz], radius[nz]
    if len(pts) == 0:
        raise SparseCloudError("all points sit at the origin")
    unit = pts / radius[:, None]

    grid = dh_grid(bandlimit)
    n = 2 * bandlimit
    nodes = grid_directions(bandlimit)
    chord, idx = cKDTree(unit).query(nodes)
    max_chord = 2.0 * np.sin(0.5 * np.pi / bandlimit)
    filled = chord <= max_chord
    unfilled = int((~filled).sum())
    if unfilled > MAX_UNFILLED_FRACTION * nodes.shape[0]:
        raise SparseCloudError(
            f"cloud too sparse for M={bandlimit}: {unfilled} of {nodes.shape[0]} nodes unfilled"
        )
    radii = np.where(filled, radius[idx], 0.0).reshape(n, n)
    mask = filled.reshape(n, n)
    while not mask.all():
        vals = np.zeros((n, n))
        cnt = np.zeros((n, n))
        for axis, shift in ((0, 1), (0, -1), (1, 1), (1, -1)):
            if axis == 1:
                v, c = np.roll(radii, shift, axis=1), np.roll(mask, shift, axis=1)
            else:
                v = np.zeros((n, n))
                c = np.zeros((n, n), dtype=bool)
                if shift == 1:
                    v[1:], c[1:] = radii[:-1], mask[:-1]
                else:
                    v[:-1], c[:-1] = radii[1:], mask[1:]
            vals += np.where(c, v, 0.0)
            cnt += c
        grow = ~mask & (cnt > 0)
        radii[grow] = vals[grow] / cnt[grow]
        mask = mask | grow
    grid.radii = radii
    return grid
