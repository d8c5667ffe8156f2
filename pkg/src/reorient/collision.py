"""Low-level collision and proximity queries.

Everything operates on numpy arrays: oriented boxes are given as a Pose plus
half-extents, capsules as two endpoints plus a radius, meshes as (m,3,3)
triangle corner arrays in whatever frame the caller has prepared.
"""

import numpy as np


def _min3(a, b, c):
    return np.minimum(np.minimum(a, b), c)


def _max3(a, b, c):
    return np.maximum(np.maximum(a, b), c)


def triangles_overlap_box(tv, half):
    """Separating-axis test of triangles against an origin-centered box.

    tv: (m,3,3) triangle corners already expressed in the box frame.
    half: (3,) box half-extents. Returns an (m,) bool mask; touching
    counts as overlap.
    """
    tv = np.asarray(tv, dtype=float)
    half = np.asarray(half, dtype=float)
    v0, v1, v2 = tv[:, 0], tv[:, 1], tv[:, 2]

    sep = np.zeros(len(tv), dtype=bool)

    # box face normals: interval tests per coordinate
    for ax in range(3):
        mn = _min3(v0[:, ax], v1[:, ax], v2[:, ax])
        mx = _max3(v0[:, ax], v1[:, ax], v2[:, ax])
        sep |= (mn > half[ax]) | (mx < -half[ax])

    # triangle plane
    n = np.cross(v1 - v0, v2 - v0)
    dist = np.einsum("ij,ij->i", n, v0)
    radius = np.abs(n) @ half
    sep |= np.abs(dist) > radius

    # nine edge cross-product axes
    edges = (v1 - v0, v2 - v1, v0 - v2)
    basis = np.eye(3)
    for i in range(3):
        for edge in edges:
            axis = np.cross(basis[i], edge)
            p0 = np.einsum("ij,ij->i", axis, v0)
            p1 = np.einsum("ij,ij->i", axis, v1)
            p2 = np.einsum("ij,ij->i", axis, v2)
            r = np.abs(axis) @ half
            mn, mx = _min3(p0, p1, p2), _max3(p0, p1, p2)
            sep |= (mn > r) | (mx < -r)

    return ~sep


def box_mesh_collision(box_pose, half, world_triangles):
    """True if the oriented box intersects any triangle (corners in world frame)."""
    if len(world_triangles) == 0:
        return False
    inv_r = box_pose.rotation.T
    local = (world_triangles - box_pose.position) @ inv_r.T
    return bool(np.any(triangles_overlap_box(local, half)))


def box_lowest_z(box_pose, half):
    """World z of the lowest corner of an oriented box."""
    return float(box_pose.position[2] - np.abs(box_pose.rotation[2]) @ np.asarray(half))


def box_below_plane(box_pose, half, z_plane, tol=1e-9):
    """True if the box dips into the halfspace z < z_plane (touching is allowed)."""
    return box_lowest_z(box_pose, half) < z_plane - tol


# ---------------------------------------------------------------------------
# ray casting

def ray_mesh_hits(origin, direction, world_triangles, t_min=1e-9, t_max=np.inf):
    """Moller-Trumbore ray cast. Returns (t, triangle_index) sorted by t.

    direction need not be unit length; t is in units of its length.
    """
    tv = np.asarray(world_triangles, dtype=float)
    if len(tv) == 0:
        return []
    origin = np.asarray(origin, dtype=float)
    direction = np.asarray(direction, dtype=float)
    e1 = tv[:, 1] - tv[:, 0]
    e2 = tv[:, 2] - tv[:, 0]
    h = np.cross(direction, e2)
    det = np.einsum("ij,ij->i", e1, h)
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, det, 1.0)
    s = origin - tv[:, 0]
    u = np.einsum("ij,ij->i", s, h) / inv
    q = np.cross(s, e1)
    v = (q @ direction) / inv
    t = np.einsum("ij,ij->i", e2, q) / inv
    eps = 1e-12
    hit = ok & (u >= -eps) & (v >= -eps) & (u + v <= 1.0 + eps) & (t >= t_min) & (t <= t_max)
    idx = np.nonzero(hit)[0]
    return sorted((float(t[i]), int(i)) for i in idx)


def first_hit(origin, direction, world_triangles, t_min=1e-9, t_max=np.inf):
    hits = ray_mesh_hits(origin, direction, world_triangles, t_min, t_max)
    return hits[0] if hits else None


# ---------------------------------------------------------------------------
# distance queries

def point_triangle_closest(points, tv):
    """Closest point on one triangle to each query point.

    points: (n,3); tv: (3,3) one triangle. Returns (n,3) closest points.
    Region walk after Ericson, vectorized over the queries.
    """
    p = np.asarray(points, dtype=float)
    a, b, c = tv[0], tv[1], tv[2]
    ab, ac = b - a, c - a
    ap = p - a
    d1 = ap @ ab
    d2 = ap @ ac
    bp = p - b
    d3 = bp @ ab
    d4 = bp @ ac
    cp = p - c
    d5 = cp @ ab
    d6 = cp @ ac

    out = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def assign(mask, value):
        m = mask & ~done
        out[m] = value[m] if value.ndim > 1 else value
        done[m] = True

    assign((d1 <= 0) & (d2 <= 0), np.broadcast_to(a, p.shape))
    assign((d3 >= 0) & (d4 <= d3), np.broadcast_to(b, p.shape))
    assign((d6 >= 0) & (d5 <= d6), np.broadcast_to(c, p.shape))

    vc = d1 * d4 - d3 * d2
    with np.errstate(invalid="ignore", divide="ignore"):
        v_ab = np.where(d1 - d3 != 0.0, d1 / (d1 - d3), 0.0)
    assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v_ab[:, None] * ab)

    vb = d5 * d2 - d1 * d6
    with np.errstate(invalid="ignore", divide="ignore"):
        w_ac = np.where(d2 - d6 != 0.0, d2 / (d2 - d6), 0.0)
    assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w_ac[:, None] * ac)

    va = d3 * d6 - d5 * d4
    denom_bc = (d4 - d3) + (d5 - d6)
    with np.errstate(invalid="ignore", divide="ignore"):
        w_bc = np.where(denom_bc != 0.0, (d4 - d3) / denom_bc, 0.0)
    assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + w_bc[:, None] * (c - b))

    total = va + vb + vc
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(total != 0.0, vb / total, 0.0)
        w = np.where(total != 0.0, vc / total, 0.0)
    interior = a + v[:, None] * ab + w[:, None] * ac
    assign(np.ones(len(p), dtype=bool), interior)
    return out


def point_mesh_distance(point, world_triangles):
    """Min distance from one point to a triangle soup."""
    p = np.asarray(point, dtype=float).reshape(1, 3)
    best = np.inf
    for tv in np.asarray(world_triangles, dtype=float):
        closest = point_triangle_closest(p, tv)
        best = min(best, float(np.linalg.norm(closest[0] - p[0])))
    return best


def segment_segment_distance(p0, p1, q0, q1):
    """Min distance between two segments (Ericson 5.1.9)."""
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    tiny = 1e-15
    if a <= tiny and e <= tiny:
        return float(np.linalg.norm(r))
    if a <= tiny:
        s = 0.0
        t = np.clip(f / e, 0.0, 1.0)
    else:
        c = d1 @ r
        if e <= tiny:
            t = 0.0
            s = np.clip(-c / a, 0.0, 1.0)
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > tiny else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = np.clip(-c / a, 0.0, 1.0)
            elif t > 1.0:
                t = 1.0
                s = np.clip((b - c) / a, 0.0, 1.0)
    closest1 = p0 + s * d1
    closest2 = q0 + t * d2
    return float(np.linalg.norm(closest1 - closest2))


def segment_triangle_distance(p0, p1, tv):
    """Min distance between a segment and one triangle."""
    # piercing segment -> zero
    direction = p1 - p0
    length = np.linalg.norm(direction)
    if length > 0.0:
        hits = ray_mesh_hits(p0, direction, tv[None, :, :], t_min=0.0, t_max=1.0)
        if hits:
            return 0.0
    ends = np.vstack([p0, p1])
    d = np.linalg.norm(point_triangle_closest(ends, tv) - ends, axis=1)
    best = float(d.min())
    for q0, q1 in ((tv[0], tv[1]), (tv[1], tv[2]), (tv[2], tv[0])):
        best = min(best, segment_segment_distance(p0, p1, q0, q1))
    return best


def capsule_mesh_collision(p0, p1, radius, world_triangles):
    """True if a capsule comes within its radius of any triangle."""
    tv = np.asarray(world_triangles, dtype=float)
    if len(tv) == 0:
        return False
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    # cheap reject: triangle bounding spheres vs segment bounding sphere
    centers = tv.mean(axis=1)
    tri_r = np.linalg.norm(tv - centers[:, None, :], axis=2).max(axis=1)
    mid = 0.5 * (p0 + p1)
    seg_r = 0.5 * np.linalg.norm(p1 - p0) + radius
    candidates = np.linalg.norm(centers - mid, axis=1) <= tri_r + seg_r
    for tvi in tv[candidates]:
        if segment_triangle_distance(p0, p1, tvi) < radius:
            return True
    return False


def capsule_below_plane(p0, p1, radius, z_plane, tol=1e-9):
    """True if a capsule dips into the halfspace z < z_plane."""
    return min(p0[2], p1[2]) - radius < z_plane - tol
