"""Rigid transforms, triangle meshes, convex hulls, and center of mass.

Units are meters and radians throughout. Rotations are stored as 3x3
matrices; poses map local coordinates into a parent frame via y = R x + p.
"""

import numpy as np
from scipy.spatial import ConvexHull as _QhullResult
from scipy.spatial import QhullError

from .errors import DegenerateMesh, NonWatertight

ORTHONORMAL_TOL = 1e-9


# ---------------------------------------------------------------------------
# rotations

def rot_x(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_about_axis(axis, angle):
    """Rodrigues rotation about a unit axis."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        raise ValueError("rotation axis must be nonzero")
    x, y, z = axis / n
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rotation_aligning(a, b):
    """Minimal rotation taking unit vector a onto unit vector b.

    The rotation axis lies in the plane orthogonal to both inputs, so the
    result carries no twist about b. Antiparallel inputs rotate pi about a
    deterministic perpendicular axis.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    c = np.cross(a, b)
    d = float(np.dot(a, b))
    s = np.linalg.norm(c)
    if s < 1e-12:
        if d > 0.0:
            return np.eye(3)
        # pick any axis perpendicular to a, preferring world x then y
        perp = np.cross(a, np.array([1.0, 0.0, 0.0]))
        if np.linalg.norm(perp) < 1e-6:
            perp = np.cross(a, np.array([0.0, 1.0, 0.0]))
        return rotation_about_axis(perp, np.pi)
    return rotation_about_axis(c / s, np.arctan2(s, d))


def rotation_angle(ra, rb=None):
    """Geodesic angle of ra (or between ra and rb) on SO(3)."""
    r = ra if rb is None else ra @ rb.T
    c = (np.trace(r) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


# ---------------------------------------------------------------------------
# poses

class Pose:
    """Rigid transform with position (3,) and rotation matrix (3,3)."""

    __slots__ = ("position", "rotation")

    def __init__(self, position=None, rotation=None):
        p = np.zeros(3) if position is None else np.array(position, dtype=float).reshape(3)
        r = np.eye(3) if rotation is None else np.array(rotation, dtype=float).reshape(3, 3)
        p.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "rotation", r)

    def __setattr__(self, name, value):
        raise AttributeError("Pose is immutable")

    @staticmethod
    def identity():
        return Pose()

    def is_valid(self, tol=ORTHONORMAL_TOL):
        r = self.rotation
        ortho = np.max(np.abs(r.T @ r - np.eye(3)))
        return ortho < tol and abs(np.linalg.det(r) - 1.0) < tol

    def compose(self, other):
        """self applied after other: (self * other) x = self(other(x))."""
        return Pose(self.rotation @ other.position + self.position,
                    self.rotation @ other.rotation)

    def inverse(self):
        rt = self.rotation.T
        return Pose(-rt @ self.position, rt)

    def apply(self, x):
        """Transform a single point."""
        return self.rotation @ np.asarray(x, dtype=float) + self.position

    def apply_many(self, pts):
        """Transform an (n,3) array of points."""
        return np.asarray(pts, dtype=float) @ self.rotation.T + self.position

    def almost_equal(self, other, pos_tol=1e-9, rot_tol=1e-9):
        return (np.linalg.norm(self.position - other.position) <= pos_tol
                and rotation_angle(self.rotation, other.rotation) <= rot_tol)

    def to_dict(self):
        return {"position": self.position.tolist(),
                "rotation": self.rotation.reshape(9).tolist()}

    @staticmethod
    def from_dict(d):
        return Pose(d["position"], np.reshape(d["rotation"], (3, 3)))

    def __repr__(self):
        return f"Pose(p={self.position.tolist()})"


def transform_point(pose, x):
    """y = R x + p."""
    return pose.apply(x)


def transform_pose(pose, x):
    """Compose pose with x: the pose of x re-expressed in pose's parent frame."""
    return pose.compose(x)


# ---------------------------------------------------------------------------
# meshes

class TriMesh:
    """Indexed triangle mesh. Triangles wind counter-clockwise seen from outside."""

    def __init__(self, vertices, triangles):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 3)
        self.triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        if len(self.triangles) and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise IndexError("triangle index out of range")

    def triangle_vertices(self):
        """(m,3,3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    def triangle_normals(self):
        """Outward unit normals, assuming CCW winding. Degenerate rows are zero."""
        tv = self.triangle_vertices()
        n = np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0])
        lens = np.linalg.norm(n, axis=1)
        safe = np.where(lens > 0.0, lens, 1.0)
        return n / safe[:, None]

    def triangle_areas(self):
        tv = self.triangle_vertices()
        n = np.cross(tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0])
        return 0.5 * np.linalg.norm(n, axis=1)

    def area(self):
        return float(np.sum(self.triangle_areas()))

    def transformed(self, pose):
        return TriMesh(pose.apply_many(self.vertices), self.triangles)

    def scaled(self, factor):
        return TriMesh(self.vertices * float(factor), self.triangles)

    def bounds(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def is_watertight(self):
        """True when every directed edge appears exactly once with its reverse present."""
        seen = {}
        for a, b, c in self.triangles:
            for u, v in ((a, b), (b, c), (c, a)):
                key = (int(u), int(v))
                if key in seen:
                    return False
                seen[key] = True
        for u, v in seen:
            if (v, u) not in seen:
                return False
        return True


def box_mesh(extents, origin=(0.0, 0.0, 0.0)):
    """Axis-aligned box as a watertight 12-triangle mesh.

    origin is the minimum corner; extents are the full edge lengths.
    """
    ex, ey, ez = extents
    ox, oy, oz = origin
    v = np.array([[x, y, z]
                  for x in (ox, ox + ex)
                  for y in (oy, oy + ey)
                  for z in (oz, oz + ez)])
    tris = [(0, 1, 3), (0, 3, 2),   # -x
            (4, 6, 7), (4, 7, 5),   # +x
            (0, 4, 5), (0, 5, 1),   # -y
            (2, 3, 7), (2, 7, 6),   # +y
            (0, 2, 6), (0, 6, 4),   # -z
            (1, 5, 7), (1, 7, 3)]   # +z
    return TriMesh(v, tris)


def box_mesh_centered(extents, center=(0.0, 0.0, 0.0)):
    extents = np.asarray(extents, dtype=float)
    return box_mesh(extents, np.asarray(center, dtype=float) - extents / 2.0)


def capsule_mesh(p0, p1, radius, segments=16, cap_rings=4):
    """Closed triangle mesh of a capsule, deterministic vertex order."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    axis = p1 - p0
    length = np.linalg.norm(axis)
    if length < 1e-12:
        axis = np.array([0.0, 0.0, 1.0])
    else:
        axis = axis / length
    ref = np.array([1.0, 0.0, 0.0])
    if abs(np.dot(ref, axis)) > 0.9:
        ref = np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, ref)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)

    thetas = 2.0 * np.pi * np.arange(segments) / segments
    ring_dirs = np.outer(np.cos(thetas), u) + np.outer(np.sin(thetas), v)

    verts = [p0 - radius * axis]           # bottom pole
    rings = []
    # bottom hemisphere rings (pole excluded), equator included
    for j in range(1, cap_rings + 1):
        lat = -np.pi / 2.0 + j * (np.pi / 2.0) / cap_rings
        center = p0 + radius * np.sin(lat) * axis
        rings.append(len(verts))
        verts.extend(center + radius * np.cos(lat) * ring_dirs)
    # top hemisphere rings: equator at p1 up to just below the pole
    for j in range(cap_rings):
        lat = j * (np.pi / 2.0) / cap_rings
        center = p1 + radius * np.sin(lat) * axis
        rings.append(len(verts))
        verts.extend(center + radius * np.cos(lat) * ring_dirs)
    top_pole = len(verts)
    verts.append(p1 + radius * axis)

    tris = []
    first = rings[0]
    for k in range(segments):
        tris.append((0, first + (k + 1) % segments, first + k))
    for a, b in zip(rings[:-1], rings[1:]):
        for k in range(segments):
            k2 = (k + 1) % segments
            tris.append((a + k, b + k2, b + k))
            tris.append((a + k, a + k2, b + k2))
    last = rings[-1]
    for k in range(segments):
        tris.append((last + k, last + (k + 1) % segments, top_pole))
    return TriMesh(np.array(verts), tris)


def center_of_mass(mesh):
    """Uniform-density centroid by signed tetrahedra against the origin.

    Requires a watertight, consistently wound mesh; the result is unchanged
    by a global winding flip since volume and moment negate together.
    """
    if not mesh.is_watertight():
        raise NonWatertight("center_of_mass requires a watertight mesh")
    tv = mesh.triangle_vertices()
    vols = np.einsum("ij,ij->i", tv[:, 0], np.cross(tv[:, 1], tv[:, 2])) / 6.0
    volume = np.sum(vols)
    if abs(volume) < 1e-15:
        raise DegenerateMesh("mesh encloses no volume")
    centroids = tv.sum(axis=1) / 4.0
    return (vols[:, None] * centroids).sum(axis=0) / volume


# ---------------------------------------------------------------------------
# coplanar patches and convex hulls

COPLANAR_ANGLE_TOL = 1e-6   # rad
COPLANAR_OFFSET_TOL = 1e-9  # m


def planar_patches(mesh, angle_tol=COPLANAR_ANGLE_TOL, offset_tol=COPLANAR_OFFSET_TOL):
    """Group triangles into edge-connected coplanar patches.

    Returns a list of index arrays into mesh.triangles. Patch order follows
    the smallest member triangle index, so grouping is deterministic.
    """
    normals = mesh.triangle_normals()
    offsets = np.einsum("ij,ij->i", normals, mesh.vertices[mesh.triangles[:, 0]])
    parent = list(range(len(mesh.triangles)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    edge_owner = {}
    cos_tol = np.cos(angle_tol)
    for t, (a, b, c) in enumerate(mesh.triangles):
        for u, v in ((a, b), (b, c), (c, a)):
            key = (int(min(u, v)), int(max(u, v)))
            if key in edge_owner:
                s = edge_owner[key]
                if (np.dot(normals[t], normals[s]) >= cos_tol
                        and abs(offsets[t] - offsets[s]) <= offset_tol):
                    ri, rj = find(t), find(s)
                    if ri != rj:
                        parent[max(ri, rj)] = min(ri, rj)
            else:
                edge_owner[key] = t

    groups = {}
    for t in range(len(mesh.triangles)):
        groups.setdefault(find(t), []).append(t)
    return [np.array(groups[r], dtype=np.int64) for r in sorted(groups)]


class Facet:
    """A merged coplanar face of a convex hull.

    normal/offset define the supporting plane n.x = d with n pointing out of
    the hull; boundary is a closed CCW loop of vertex indices into the hull
    mesh (CCW seen from outside).
    """

    __slots__ = ("normal", "offset", "boundary", "triangle_indices")

    def __init__(self, normal, offset, boundary, triangle_indices):
        self.normal = np.asarray(normal, dtype=float)
        self.offset = float(offset)
        self.boundary = np.asarray(boundary, dtype=np.int64)
        self.triangle_indices = np.asarray(triangle_indices, dtype=np.int64)

    def boundary_points(self, hull_mesh):
        return hull_mesh.vertices[self.boundary]


class ConvexHull:
    """Convex hull as an outward-wound TriMesh plus merged planar facets."""

    def __init__(self, hull_mesh, facets):
        self.hull = hull_mesh
        self.facets = facets

    def signed_distances(self, points):
        """(n_points, n_facets) outward signed distances to every facet plane."""
        pts = np.asarray(points, dtype=float)
        normals = np.array([f.normal for f in self.facets])
        offsets = np.array([f.offset for f in self.facets])
        return pts @ normals.T - offsets

    def contains(self, points, tol=1e-9):
        return bool(np.all(self.signed_distances(points) <= tol))


def _chain_boundary(directed_edges):
    """Order boundary edges (u -> v) into a single closed loop.

    Starts from the smallest vertex id for determinism. Raises if edges do
    not form one closed loop.
    """
    nxt = {}
    for u, v in directed_edges:
        if u in nxt:
            raise ValueError("facet boundary is not a simple loop")
        nxt[u] = v
    start = min(nxt)
    loop = [start]
    cur = nxt[start]
    while cur != start:
        loop.append(cur)
        cur = nxt[cur]
        if len(loop) > len(nxt):
            raise ValueError("facet boundary does not close")
    if len(loop) != len(nxt):
        raise ValueError("facet boundary has disconnected loops")
    return loop


def convex_hull(mesh):
    """Convex hull with coplanar triangles merged into planar facets.

    Hull construction delegates to Qhull's incremental quickhull; facet
    merging, boundary chaining, and plane fitting are done here. Every
    input vertex satisfies n.v - d <= 0 against every returned facet plane
    by construction of the offsets.
    """
    pts = np.asarray(mesh.vertices, dtype=float)
    if len(pts) < 4:
        raise DegenerateMesh("convex hull needs at least 4 vertices")
    try:
        qh = _QhullResult(pts)
    except QhullError as exc:
        raise DegenerateMesh(f"degenerate input to convex hull: {exc}") from exc

    # compact hull vertex list, stable order by original index
    used = np.unique(qh.simplices)
    remap = {int(old): new for new, old in enumerate(used)}
    hull_verts = pts[used]

    # orient every triangle so its geometric normal matches qhull's outward one
    tris = []
    for simplex, eq in zip(qh.simplices, qh.equations):
        a, b, c = (remap[int(i)] for i in simplex)
        n_geo = np.cross(hull_verts[b] - hull_verts[a], hull_verts[c] - hull_verts[a])
        if np.dot(n_geo, eq[:3]) < 0.0:
            b, c = c, b
        tris.append((a, b, c))
    hull_mesh = TriMesh(hull_verts, tris)

    facets = []
    for patch in planar_patches(hull_mesh):
        tri_normals = hull_mesh.triangle_normals()[patch]
        tri_areas = hull_mesh.triangle_areas()[patch]
        normal = (tri_normals * tri_areas[:, None]).sum(axis=0)
        normal /= np.linalg.norm(normal)
        # offset = support value: guarantees containment of every input vertex
        offset = float(np.max(pts @ normal))

        edges = set()
        for t in patch:
            a, b, c = hull_mesh.triangles[t]
            for u, v in ((int(a), int(b)), (int(b), int(c)), (int(c), int(a))):
                if (v, u) in edges:
                    edges.discard((v, u))
                else:
                    edges.add((u, v))
        boundary = _chain_boundary(sorted(edges))
        facets.append(Facet(normal, offset, boundary, patch))

    return ConvexHull(hull_mesh, facets)
