"""Stable placements on a horizontal surface and the grasps accessible at them.

A placement is a convex-hull facet the object can rest on: the center of
mass must project inside the facet's support polygon with some margin.
Canonical placement poses rest the facet on z = 0 with the COM projection
at the origin; the solver re-poses them at concrete table positions.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import NoStablePlacement
from .geometry import Pose, rot_z, rotation_aligning
from .grasp import gripper_collides

DEFAULT_STABILITY_MARGIN = 0.002


@dataclass
class Scene:
    """Static environment: table plane, workspace bounds, rigid obstacles."""

    table_height: float = 0.0
    table_extent: tuple = ((-1.0, 1.0), (-1.0, 1.0))
    obstacles: list = field(default_factory=list)  # (TriMesh, Pose) pairs
    candidate_regrasp_positions: list = field(default_factory=list)

    def __post_init__(self):
        (x0, x1), (y0, y1) = self.table_extent
        if x0 >= x1 or y0 >= y1:
            raise ValueError("table_extent bounds must be increasing")
        for x, y in self.candidate_regrasp_positions:
            if not (x0 <= x <= x1 and y0 <= y <= y1):
                raise ValueError(f"regrasp position ({x}, {y}) outside table extent")
        for mesh, pose in self.obstacles:
            if pose.apply_many(mesh.vertices)[:, 2].min() < self.table_height - 1e-6:
                raise ValueError("obstacle extends below the table plane")

    def contains_position(self, x, y):
        (x0, x1), (y0, y1) = self.table_extent
        return x0 <= x <= x1 and y0 <= y <= y1

    def obstacle_triangles(self):
        """All obstacle triangles in world coordinates, (m,3,3)."""
        parts = [mesh.transformed(pose).triangle_vertices()
                 for mesh, pose in self.obstacles]
        if not parts:
            return np.zeros((0, 3, 3))
        return np.concatenate(parts, axis=0)

    def with_extra_obstacle(self, mesh, pose):
        return Scene(self.table_height, self.table_extent,
                     list(self.obstacles) + [(mesh, pose)],
                     list(self.candidate_regrasp_positions))


@dataclass
class Placement:
    """A stable pose of the object plus the grasp ids that survive filtering.

    accessible_grasp_ids refer into the originating GraspSet and are never
    renumbered; world_grasp_poses maps each surviving id to the grasp pose
    composed with this placement's pose.
    """

    id: int
    pose: Pose
    support_facet: int
    accessible_grasp_ids: list
    world_grasp_poses: dict

    @property
    def empty(self):
        return len(self.accessible_grasp_ids) == 0


def support_polygon_margin(facet, hull_mesh, com):
    """Signed clearance of the COM projection inside the facet polygon.

    Positive means strictly inside with that much distance to the nearest
    edge; negative means outside. Projection is along the facet normal.
    """
    n = facet.normal
    proj = com - (np.dot(n, com) - facet.offset) * n
    pts = facet.boundary_points(hull_mesh)

    # in-plane basis; boundary winds CCW about the outward normal
    u = pts[1] - pts[0]
    u = u - np.dot(u, n) * n
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    poly = np.column_stack([(pts - pts[0]) @ u, (pts - pts[0]) @ v])
    p2 = np.array([np.dot(proj - pts[0], u), np.dot(proj - pts[0], v)])

    margin = np.inf
    for i in range(len(poly)):
        a = poly[i]
        b = poly[(i + 1) % len(poly)]
        e = b - a
        elen = np.linalg.norm(e)
        if elen < 1e-15:
            continue
        # left-of-edge distance; interior of a CCW convex polygon is all-left
        margin = min(margin, float(np.cross(e, p2 - a)) / elen)
    return margin


def stable_placements(mesh, hull, com, stability_margin=DEFAULT_STABILITY_MARGIN):
    """One canonical placement per hull facet that supports the COM.

    Returns [(facet_index, canonical_pose)]; the canonical pose rests the
    facet on z = 0 with the COM projection at x = y = 0 and no added yaw
    (the normal is aligned to (0,0,-1) by the minimal, twist-free rotation).
    """
    out = []
    for idx, facet in enumerate(hull.facets):
        if support_polygon_margin(facet, hull.hull, com) < stability_margin:
            continue
        r0 = rotation_aligning(facet.normal, np.array([0.0, 0.0, -1.0]))
        com_r = r0 @ com
        proj = com - (np.dot(facet.normal, com) - facet.offset) * facet.normal
        z_f = (r0 @ proj)[2]
        out.append((idx, Pose([-com_r[0], -com_r[1], -z_f], r0)))
    if not out:
        raise NoStablePlacement("no hull facet supports the center of mass "
                                f"with margin {stability_margin}")
    return out


def pose_at(canonical_pose, x, y, table_height, yaw=0.0):
    """Re-pose a canonical placement at a table position with optional yaw."""
    lift = Pose([x, y, table_height], rot_z(yaw) if yaw else None)
    return lift.compose(canonical_pose)


def associate_grasps(placement_pose, grasp_set, scene):
    """Grasps usable on the object at placement_pose.

    Each grasp is transformed into the world by the placement pose; any
    whose gripper volume dips below the table plane or intersects an
    obstacle mesh is dropped. Returns [(grasp_id, world_pose)].
    """
    obstacle_tris = scene.obstacle_triangles()
    survivors = []
    for g in grasp_set.grasps:
        world = placement_pose.compose(g.pose)
        if gripper_collides(grasp_set.gripper, world, g.jaw_width,
                            obstacle_tris, scene.table_height):
            continue
        survivors.append((g.id, world))
    return survivors


def make_placement(pid, pose, support_facet, survivors):
    return Placement(pid, pose, support_facet,
                     [gid for gid, _ in survivors],
                     {gid: wp for gid, wp in survivors})
