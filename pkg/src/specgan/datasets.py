"""Synthetic shape families used for desk-scale experiments."""

import numpy as np

from .geometry import box_mesh, ellipsoid_mesh
from .mesh_sampler import grid_to_pointcloud, normalize_mesh, raycast_sample
from .sh_core import forward_sht


def ellipsoid_meshes(count, rng, low=0.4, high=0.9, subdivisions=3):
    axes = rng.uniform(low, high, size=(count, 3))
    return [ellipsoid_mesh(a, subdivisions) for a in axes], axes


def box_meshes(count, rng, low=0.4, high=0.9):
    ext = rng.uniform(low, high, size=(count, 3))
    return [box_mesh(e) for e in ext], ext


def encode_meshes(meshes, bandlimit):
    """Normalize, ray-cast and transform each mesh; returns (smvs, clouds)."""
    smvs, clouds = [], []
    for mesh in meshes:
        grid = raycast_sample(normalize_mesh(mesh), bandlimit)
        smvs.append(forward_sht(grid))
        clouds.append(grid_to_pointcloud(grid))
    return smvs, clouds
