"""Readers and writers for OBJ/OFF meshes and PLY/XYZ point clouds."""

from pathlib import Path

import numpy as np

from .geometry import PointCloud, TriangleMesh


class MeshFormatError(ValueError):
    pass


def _fan(poly):
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def read_obj(path):
    verts, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == "v":
                    verts.append([float(v) for v in parts[1:4]])
                elif parts[0] == "f":
                    idx = []
                    for tok in parts[1:]:
                        i = int(tok.split("/")[0])
                        idx.append(i - 1 if i > 0 else len(verts) + i)
                    faces.extend(_fan(idx))
            except ValueError as exc:
                raise MeshFormatError(f"{path}:{lineno}: {exc}") from exc
    if not verts or not faces:
        raise MeshFormatError(f"{path}: no geometry")
    try:
        return TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64))
    except ValueError as exc:
        raise MeshFormatError(f"{path}: {exc}") from exc


def read_off(path):
    tokens = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or not tokens[0].startswith("OFF"):
        raise MeshFormatError(f"{path}: missing OFF header")
    # header may be glued to the counts ("OFF8 6 0")
    head = tokens[0][3:]
    rest = ([head] if head else []) + tokens[1:]
    try:
        nv, nf = int(rest[0]), int(rest[1])
        pos = 3
        verts = np.array(rest[pos:pos + 3 * nv], dtype=np.float64).reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            k = int(rest[pos])
            faces.extend(_fan([int(v) for v in rest[pos + 1:pos + 1 + k]]))
            pos += 1 + k
    except (IndexError, ValueError) as exc:
        raise MeshFormatError(f"{path}: malformed OFF body") from exc
    if nv == 0 or not faces:
        raise MeshFormatError(f"{path}: no geometry")
    try:
        return TriangleMesh(verts, np.array(faces, dtype=np.int64))
    except ValueError as exc:
        raise MeshFormatError(f"{path}: {exc}") from exc


def read_mesh(path):
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return read_obj(path)
    if suffix == ".off":
        return read_off(path)
    raise MeshFormatError(f"unsupported mesh format: {path}")


def _xyz(row):
    # shortest repr that round-trips each double exactly
    return " ".join(repr(float(x)) for x in row)


def write_obj(mesh, path):
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {_xyz(v)}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def write_off(mesh, path):
    with open(path, "w") as fh:
        fh.write(f"OFF\n{len(mesh.vertices)} {len(mesh.faces)} 0\n")
        for v in mesh.vertices:
            fh.write(f"{_xyz(v)}\n")
        for f in mesh.faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def write_ply(cloud, path):
    pts = cloud.points
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(pts)}\n")
        fh.write("property double x\nproperty double y\nproperty double z\nend_header\n")
        for p in pts:
            fh.write(f"{_xyz(p)}\n")


def write_xyz(cloud, path):
    with open(path, "w") as fh:
        for p in cloud.points:
            fh.write(f"{_xyz(p)}\n")


def read_ply(path):
    with open(path) as fh:
        if fh.readline().strip() != "ply":
            raise MeshFormatError(f"{path}: not a PLY file")
        count = None
        for line in fh:
            parts = line.split()
            if parts[:1] == ["format"] and parts[1] != "ascii":
                raise MeshFormatError(f"{path}: only ascii PLY is supported")
            if parts[:2] == ["element", "vertex"]:
                count = int(parts[2])
            if parts[:1] == ["end_header"]:
                break
        if count is None:
            raise MeshFormatError(f"{path}: no vertex element")
        rows = [fh.readline().split()[:3] for _ in range(count)]
    return PointCloud(np.array(rows, dtype=np.float64).reshape(-1, 3))


def read_xyz(path):
    return PointCloud(np.loadtxt(path, dtype=np.float64, ndmin=2)[:, :3])


def read_cloud(path):
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        return read_ply(path)
    if suffix == ".xyz":
        return read_xyz(path)
    raise MeshFormatError(f"unsupported point-cloud format: {path}")


def write_cloud(cloud, path, fmt="ply"):
    if fmt == "ply":
        write_ply(cloud, path)
    elif fmt == "xyz":
        write_xyz(cloud, path)
    else:
        raise ValueError(f"unknown point-cloud format {fmt!r}")
