"""Parallel-jaw grasp sampling: antipodal contacts, force closure, hand collision.

Grasps are expressed in the object's local frame. The grasp rotation matrix
follows a fixed convention: column 0 is the approach axis (pointing from the
grasp center back toward the palm), column 1 is the jaw closing axis.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NonWatertight
from .geometry import Pose, planar_patches, rotation_about_axis
from . import collision

log = logging.getLogger(__name__)

# gap between finger pad and contact surface so a closed jaw does not
# register as touching its own contact points
CONTACT_CLEARANCE = 1e-6

DEFAULT_ANTIPARALLEL_TOL = np.deg2rad(5.0)


@dataclass(frozen=True)
class GripperModel:
    """Two-finger gripper approximated by three boxes.

    finger_box extents are (depth along approach, thickness along jaw,
    width). The fingertip overshoots the contact line by a quarter of the
    finger depth, so each pad spans approach coordinates
    [-depth/4, +3*depth/4] around the grasp center, with the palm box
    stacked behind the fingers on the +approach side.
    """

    max_jaw_width: float
    finger_box: tuple
    palm_box: tuple

    def __post_init__(self):
        if self.max_jaw_width <= 0:
            raise ValueError("max_jaw_width must be positive")
        if min(self.finger_box) <= 0 or min(self.palm_box) <= 0:
            raise ValueError("box extents must be positive")

    def body_boxes(self, jaw_width):
        """(local Pose, half extents) for both fingers and the palm."""
        fx, fy, fz = self.finger_box
        px, py, pz = self.palm_box
        half_finger = np.array([fx, fy, fz]) / 2.0
        half_palm = np.array([px, py, pz]) / 2.0
        y_off = jaw_width / 2.0 + fy / 2.0 + CONTACT_CLEARANCE
        return [
            (Pose([fx / 4.0, y_off, 0.0]), half_finger),
            (Pose([fx / 4.0, -y_off, 0.0]), half_finger),
            (Pose([3.0 * fx / 4.0 + px / 2.0, 0.0, 0.0]), half_palm),
        ]

    def to_dict(self):
        return {"max_jaw_width": self.max_jaw_width,
                "finger_box": list(self.finger_box),
                "palm_box": list(self.palm_box)}

    @staticmethod
    def from_dict(d):
        return GripperModel(d["max_jaw_width"], tuple(d["finger_box"]),
                            tuple(d["palm_box"]))


def robotiq85_like():
    """Default gripper: 85 mm stroke industrial two-finger hand."""
    return GripperModel(max_jaw_width=0.085,
                        finger_box=(0.042, 0.012, 0.022),
                        palm_box=(0.075, 0.125, 0.075))


@dataclass(frozen=True)
class Grasp:
    """One sampled grasp: pose in the object frame plus its contact data.

    contact normals point INTO the object (from the surface toward the
    opposite contact).
    """

    id: int
    pose: Pose
    jaw_width: float
    contact_a: np.ndarray
    contact_b: np.ndarray
    contact_normal_a: np.ndarray
    contact_normal_b: np.ndarray

    def to_dict(self):
        return {"id": self.id,
                "p": self.pose.position.tolist(),
                "R": self.pose.rotation.reshape(9).tolist(),
                "jaw_width": self.jaw_width,
                "contacts": [self.contact_a.tolist(), self.contact_b.tolist()],
                "normals": [self.contact_normal_a.tolist(), self.contact_normal_b.tolist()]}

    @staticmethod
    def from_dict(d):
        return Grasp(int(d["id"]),
                     Pose(d["p"], np.reshape(d["R"], (3, 3))),
                     float(d["jaw_width"]),
                     np.array(d["contacts"][0]), np.array(d["contacts"][1]),
                     np.array(d["normals"][0]), np.array(d["normals"][1]))


@dataclass
class GraspSet:
    """All grasps planned for one object. Ids are dense 0..n-1 and stable:
    downstream filters pass around id subsets, never renumber."""

    grasps: list
    gripper: GripperModel
    friction_mu: float

    def __len__(self):
        return len(self.grasps)

    def by_id(self, gid):
        return self.grasps[gid]

    def to_dict(self):
        return {"gripper": self.gripper.to_dict(),
                "mu": self.friction_mu,
                "grasps": [g.to_dict() for g in self.grasps]}

    @staticmethod
    def from_dict(d):
        return GraspSet([Grasp.from_dict(g) for g in d["grasps"]],
                        GripperModel.from_dict(d["gripper"]),
                        float(d["mu"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @staticmethod
    def load(path):
        with open(path) as fh:
            return GraspSet.from_dict(json.load(fh))


@dataclass(frozen=True)
class ContactPair:
    """Candidate antipodal contact pair prior to hand placement."""

    point_a: np.ndarray
    point_b: np.ndarray
    normal_a: np.ndarray  # inward
    normal_b: np.ndarray  # inward
    triangle_a: int
    triangle_b: int


def sample_facet_pairs(mesh, gripper, density, angle_tol=DEFAULT_ANTIPARALLEL_TOL,
                       seed=0):
    """Sample contact pairs on near-antiparallel faces within the jaw stroke.

    Surface points are drawn stratified per coplanar patch, at least one
    per patch, `density` samples per square meter overall. The opposing
    contact is the first ray hit from a sample along its inward normal;
    pairs survive when the two outward facet normals are antiparallel
    within angle_tol and the contact distance fits the jaw.
    """
    rng = np.random.default_rng(seed)
    tv = mesh.triangle_vertices()
    normals = mesh.triangle_normals()
    areas = mesh.triangle_areas()
    cos_tol = np.cos(angle_tol)

    pairs = []
    for patch in planar_patches(mesh):
        patch_area = float(areas[patch].sum())
        if patch_area <= 0.0:
            continue
        count = max(1, int(round(density * patch_area)))
        weights = areas[patch] / patch_area
        chosen = rng.choice(patch, size=count, p=weights)
        uv = rng.random((count, 2))
        fold = uv.sum(axis=1) > 1.0
        uv[fold] = 1.0 - uv[fold]
        for tri, (u, v) in zip(chosen, uv):
            v0, v1, v2 = tv[tri]
            point = v0 + u * (v1 - v0) + v * (v2 - v0)
            n_out = normals[tri]
            hit = collision.first_hit(point, -n_out, tv,
                                      t_min=1e-9, t_max=gripper.max_jaw_width)
            if hit is None:
                continue
            t, tri_b = hit
            n_b_out = normals[tri_b]
            if np.dot(n_out, n_b_out) > -cos_tol:
                continue
            point_b = point - t * n_out
            pairs.append(ContactPair(point, point_b, -n_out, -n_b_out,
                                     int(tri), tri_b))
    return pairs


def check_force_closure(contact_a, contact_b, normal_a, normal_b, mu):
    """Two-contact antipodal force closure.

    normal_a/normal_b are inward unit surface normals. Closure holds when
    the line through the contacts lies inside both friction cones, i.e.
    its angle to each inward normal is at most atan(mu).
    """
    d = np.asarray(contact_b, dtype=float) - np.asarray(contact_a, dtype=float)
    dist = np.linalg.norm(d)
    if dist < 1e-12:
        return False
    d = d / dist
    half_angle = np.arctan(mu)
    cos_limit = np.cos(half_angle)
    return (float(np.dot(d, normal_a)) >= cos_limit
            and float(np.dot(-d, normal_b)) >= cos_limit)


def _approach_reference(tv_a, jaw_axis):
    """Deterministic in-plane reference direction for approach sampling.

    Built from the contact triangle's own edges so the sampled approach
    set co-rotates with the object.
    """
    for e in (tv_a[1] - tv_a[0], tv_a[2] - tv_a[0], tv_a[2] - tv_a[1]):
        proj = e - np.dot(e, jaw_axis) * jaw_axis
        n = np.linalg.norm(proj)
        if n > 1e-9:
            return proj / n
    raise ValueError("degenerate contact triangle")


def plan_grasps(mesh, gripper, mu=0.5, density=400.0, n_approach=8, seed=0,
                angle_tol=DEFAULT_ANTIPARALLEL_TOL):
    """Plan the set of force-closure, object-collision-free grasps.

    For every surviving contact pair the jaw axis is the contact line and
    n_approach hand rolls about it are tried; a grasp is kept when the
    finger and palm boxes at the pair's jaw width stay clear of the mesh.
    """
    if not mesh.is_watertight():
        raise NonWatertight("grasp sampling requires a watertight mesh")
    tv = mesh.triangle_vertices()

    grasps = []
    for pair in sample_facet_pairs(mesh, gripper, density, angle_tol, seed):
        if not check_force_closure(pair.point_a, pair.point_b,
                                   pair.normal_a, pair.normal_b, mu):
            continue
        width = float(np.linalg.norm(pair.point_b - pair.point_a))
        jaw_axis = (pair.point_b - pair.point_a) / width
        center = 0.5 * (pair.point_a + pair.point_b)
        ref = _approach_reference(tv[pair.triangle_a], jaw_axis)
        for k in range(n_approach):
            approach = rotation_about_axis(jaw_axis, 2.0 * np.pi * k / n_approach) @ ref
            third = np.cross(approach, jaw_axis)
            pose = Pose(center, np.column_stack([approach, jaw_axis, third]))
            if _gripper_hits_mesh(gripper, pose, width, tv):
                continue
            grasps.append(Grasp(len(grasps), pose, width,
                                pair.point_a.copy(), pair.point_b.copy(),
                                pair.normal_a.copy(), pair.normal_b.copy()))
    if not grasps:
        log.warning("grasp planner produced an empty set")
    return GraspSet(grasps, gripper, mu)


def _gripper_hits_mesh(gripper, grasp_pose, jaw_width, world_triangles):
    for local, half in gripper.body_boxes(jaw_width):
        if collision.box_mesh_collision(grasp_pose.compose(local), half,
                                        world_triangles):
            return True
    return False


def gripper_collides(gripper, grasp_pose, jaw_width, world_triangles=None,
                     table_z=None):
    """Gripper body collision against a triangle soup and/or the table halfspace."""
    for local, half in gripper.body_boxes(jaw_width):
        box_pose = grasp_pose.compose(local)
        if table_z is not None and collision.box_below_plane(box_pose, half, table_z):
            return True
        if world_triangles is not None and len(world_triangles) and \
                collision.box_mesh_collision(box_pose, half, world_triangles):
            return True
    return False
