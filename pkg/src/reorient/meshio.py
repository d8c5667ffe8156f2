"""Mesh file loading: ASCII OBJ (triangles only) and binary STL.

File coordinates are taken as meters unless a scale override is given.
"""

import os
import struct

import numpy as np

from .geometry import TriMesh


def load_obj(path):
    """Read an ASCII OBJ with triangular faces and 1-based vertex indices."""
    vertices = []
    faces = []
    with open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise ValueError(f"{path}:{lineno}: vertex needs 3 coordinates")
                vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
            elif tag == "f":
                if len(parts) != 4:
                    raise ValueError(f"{path}:{lineno}: only triangular faces are supported")
                idx = []
                for token in parts[1:]:
                    head = token.split("/")[0]
                    i = int(head)
                    if i < 1:
                        raise ValueError(f"{path}:{lineno}: indices must be 1-based positive")
                    idx.append(i - 1)
                faces.append(idx)
            # vn/vt/usemtl/o/g/s lines are ignored
    if not vertices or not faces:
        raise ValueError(f"{path}: no triangles found")
    return TriMesh(np.array(vertices), np.array(faces))


def save_obj(path, meshes, comments=()):
    """Write one OBJ containing the given list of (name, TriMesh) groups.

    Vertices are written with full precision in deterministic order so a
    reload reproduces coordinates exactly.
    """
    with open(path, "w") as fh:
        for comment in comments:
            fh.write(f"# {comment}\n")
        base = 1
        for name, mesh in meshes:
            fh.write(f"o {name}\n")
            for v in mesh.vertices:
                fh.write("v {0!r} {1!r} {2!r}\n".format(*[float(x) for x in v]))
            for a, b, c in mesh.triangles:
                fh.write(f"f {a + base} {b + base} {c + base}\n")
            base += len(mesh.vertices)


def load_stl(path):
    """Read a binary little-endian STL and weld exactly coincident vertices."""
    size = os.path.getsize(path)
    with open(path, "rb") as fh:
        fh.read(80)
        (count,) = struct.unpack("<I", fh.read(4))
        expected = 84 + 50 * count
        if size != expected:
            raise ValueError(f"{path}: not a binary STL (size {size}, expected {expected})")
        data = fh.read(50 * count)
    records = np.frombuffer(data, dtype=np.uint8).reshape(count, 50)
    floats = records[:, :48].copy().view("<f4").reshape(count, 12).astype(float)
    corners = floats[:, 3:12].reshape(count * 3, 3)

    welded, inverse = np.unique(corners, axis=0, return_inverse=True)
    triangles = inverse.reshape(count, 3)
    return TriMesh(welded, triangles)


def load_mesh(path, scale=1.0):
    """Dispatch on extension; apply a unit-scale override when given."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".obj":
        mesh = load_obj(path)
    elif ext == ".stl":
        mesh = load_stl(path)
    else:
        raise ValueError(f"{path}: unsupported mesh format {ext!r} (use .obj or .stl)")
    if scale != 1.0:
        mesh = mesh.scaled(scale)
    return mesh
