"""Serial-arm model: forward kinematics, damped-least-squares IK, link-capsule
scene collision, and the per-position grasp filtering that reduces accessible
grasps to robot-reachable ones.

Joint vectors are plain numpy arrays of angles in radians, one per joint.
"""

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.spatial.transform import Rotation as _Rotation

from .errors import IKFailure, WrongDimension
from .geometry import Pose, rotation_about_axis, rotation_angle
from .grasp import gripper_collides
from .placement import Placement, pose_at
from . import collision

DEFAULT_OMEGA = 0.05
DEFAULT_BACKWARD = np.array([0.0, 0.0, 1.0])

IK_POS_TOL = 1e-4
IK_ROT_TOL = 1e-3
IK_RESTARTS = 20
IK_ITERATIONS = 200
IK_DAMPING = 1e-2
IK_STEP_CLAMP = 0.2


@dataclass(frozen=True)
class Capsule:
    p0: np.ndarray
    p1: np.ndarray
    radius: float

    @staticmethod
    def from_dict(d):
        return Capsule(np.array(d["p0"], dtype=float),
                       np.array(d["p1"], dtype=float), float(d["radius"]))

    def to_dict(self):
        return {"p0": self.p0.tolist(), "p1": self.p1.tolist(), "radius": self.radius}


@dataclass(frozen=True)
class Joint:
    axis: np.ndarray          # unit, in the joint's own frame
    offset: Pose              # parent link frame -> this joint frame
    limits: tuple             # (lo, hi) radians

    @staticmethod
    def from_dict(d):
        axis = np.array(d["axis"], dtype=float)
        axis = axis / np.linalg.norm(axis)
        lo, hi = d["limits"]
        if lo >= hi:
            raise ValueError("joint limit lo must be below hi")
        return Joint(axis, Pose.from_dict(d["offset_pose"]), (float(lo), float(hi)))

    def to_dict(self):
        return {"axis": self.axis.tolist(), "offset_pose": self.offset.to_dict(),
                "limits": list(self.limits)}


class RobotModel:
    """Serial chain of revolute joints with a tool offset and link capsules."""

    def __init__(self, base_pose, joints, tcp_offset, link_capsules):
        if len(joints) < 6:
            raise ValueError("full 6-D pose IK needs at least 6 revolute joints")
        if len(link_capsules) != len(joints):
            raise ValueError("need one capsule per link")
        self.base_pose = base_pose
        self.joints = list(joints)
        self.tcp_offset = tcp_offset
        self.link_capsules = list(link_capsules)
        self.n = len(joints)
        # conservative reach bound used to fail hopeless IK targets fast
        self._reach = (sum(np.linalg.norm(j.offset.position) for j in joints)
                       + np.linalg.norm(tcp_offset.position))

    @property
    def lower_limits(self):
        return np.array([j.limits[0] for j in self.joints])

    @property
    def upper_limits(self):
        return np.array([j.limits[1] for j in self.joints])

    def home(self):
        return np.zeros(self.n)

    def rebased(self, base_pose):
        return RobotModel(base_pose, self.joints, self.tcp_offset, self.link_capsules)

    @staticmethod
    def from_dict(d):
        return RobotModel(Pose.from_dict(d["base_pose"]),
                          [Joint.from_dict(j) for j in d["joints"]],
                          Pose.from_dict(d["tcp_offset"]),
                          [Capsule.from_dict(c) for c in d["link_capsules"]])

    def to_dict(self):
        return {"base_pose": self.base_pose.to_dict(),
                "joints": [j.to_dict() for j in self.joints],
                "tcp_offset": self.tcp_offset.to_dict(),
                "link_capsules": [c.to_dict() for c in self.link_capsules]}

    @staticmethod
    def load(path):
        with open(path) as fh:
            return RobotModel.from_dict(json.load(fh))


def default_arm(base_pose=None):
    """The 6-DOF anthropomorphic arm shipped with the package (~0.85 m reach)."""
    text = resources.files("reorient").joinpath("data/default_arm.json").read_text()
    robot = RobotModel.from_dict(json.loads(text))
    return robot.rebased(base_pose) if base_pose is not None else robot


def forward_kinematics(robot, q):
    """TCP pose plus the pose of every link frame (after its joint rotation)."""
    q = np.asarray(q, dtype=float)
    if q.shape != (robot.n,):
        raise WrongDimension(f"expected {robot.n} joint angles, got shape {q.shape}")
    link_poses = []
    t = robot.base_pose
    for joint, qi in zip(robot.joints, q):
        t = t.compose(joint.offset).compose(
            Pose(rotation=rotation_about_axis(joint.axis, qi)))
        link_poses.append(t)
    return t.compose(robot.tcp_offset), link_poses


def _jacobian(robot, link_poses, tcp_position):
    cols = []
    for joint, lp in zip(robot.joints, link_poses):
        z = lp.rotation @ joint.axis
        cols.append(np.concatenate([np.cross(z, tcp_position - lp.position), z]))
    return np.array(cols).T  # 6 x n


def _pose_error(target, current):
    dp = target.position - current.position
    dr = _Rotation.from_matrix(target.rotation @ current.rotation.T).as_rotvec()
    return dp, dr


def solve_ik(robot, target, seed=None, pos_tol=IK_POS_TOL, rot_tol=IK_ROT_TOL,
             restarts=IK_RESTARTS, iterations=IK_ITERATIONS, rng_seed=0):
    """Damped least squares with seeded random restarts.

    Returns a joint vector whose FK matches the target within
    (pos_tol, rot_tol); raises IKFailure once the restart budget is spent.
    """
    if np.linalg.norm(target.position - robot.base_pose.position) > robot._reach + pos_tol:
        raise IKFailure("target beyond reach radius")
    lo, hi = robot.lower_limits, robot.upper_limits
    rng = np.random.default_rng(rng_seed)
    start = robot.home() if seed is None else np.asarray(seed, dtype=float)
    # base yaw pointing at the target helps odd restarts escape folded arms
    rel = robot.base_pose.rotation.T @ (target.position - robot.base_pose.position)
    azimuth = float(np.arctan2(rel[1], rel[0]))

    for attempt in range(restarts):
        if attempt == 0:
            q = start.copy()
        else:
            q = rng.uniform(lo, hi)
            if attempt % 2 == 1:
                q[0] = np.clip(azimuth, lo[0], hi[0])
        q = np.clip(q, lo, hi)
        best = np.inf
        stale = 0
        for _ in range(iterations):
            tcp, links = forward_kinematics(robot, q)
            dp, dr = _pose_error(target, tcp)
            if np.linalg.norm(dp) < pos_tol and np.linalg.norm(dr) < rot_tol:
                return _polish(robot, target, q, lo, hi, pos_tol, rot_tol)
            err = np.concatenate([dp, dr])
            e = np.linalg.norm(err)
            if e < best - 1e-12:
                best = e
                stale = 0
            else:
                stale += 1
                if stale > 15:
                    break  # plateaued; try the next restart
            j = _jacobian(robot, links, tcp.position)
            dq = j.T @ np.linalg.solve(j @ j.T + IK_DAMPING**2 * np.eye(6), err)
            step = np.max(np.abs(dq))
            if step > IK_STEP_CLAMP:
                dq *= IK_STEP_CLAMP / step
            q = np.clip(q + dq, lo, hi)
    raise IKFailure("no IK solution within restart budget")


def _polish(robot, target, q, lo, hi, pos_tol, rot_tol, steps=4):
    """Shrink the residual well below tolerance once inside the basin."""
    best_q = q
    tcp, links = forward_kinematics(robot, q)
    dp, dr = _pose_error(target, tcp)
    best_err = np.linalg.norm(np.concatenate([dp, dr]))
    for _ in range(steps):
        err = np.concatenate([dp, dr])
        j = _jacobian(robot, links, tcp.position)
        dq = j.T @ np.linalg.solve(j @ j.T + (IK_DAMPING * 1e-2)**2 * np.eye(6), err)
        q = np.clip(q + dq, lo, hi)
        tcp, links = forward_kinematics(robot, q)
        dp, dr = _pose_error(target, tcp)
        e = np.linalg.norm(np.concatenate([dp, dr]))
        if (e < best_err and np.linalg.norm(dp) < pos_tol
                and np.linalg.norm(dr) < rot_tol):
            best_q, best_err = q, e
        else:
            break
    return best_q


def within_limits(robot, q):
    return bool(np.all(q >= robot.lower_limits) and np.all(q <= robot.upper_limits))


# ---------------------------------------------------------------------------
# motion primitive poses

@dataclass(frozen=True)
class PrimitiveTriple:
    """Grasp key pose plus its pregrasp/release and retraction offsets.

    pre sits omega along the approach axis (first rotation column) from o;
    ret sits omega along the task's backward direction. Rotations are
    shared by all three.
    """

    o: Pose
    pre: Pose
    ret: Pose
    omega: float
    backward: np.ndarray


def primitive_poses(grasp_world_pose, omega, backward):
    backward = np.asarray(backward, dtype=float)
    if abs(np.linalg.norm(backward) - 1.0) > 1e-9:
        raise ValueError("backward must be a unit vector")
    if omega < 0.0:
        raise ValueError("omega must be non-negative")
    r = grasp_world_pose.rotation
    p = grasp_world_pose.position
    pre = Pose(p + omega * r[:, 0], r)
    ret = Pose(p + omega * backward, r)
    return PrimitiveTriple(grasp_world_pose, pre, ret, float(omega), backward)


# ---------------------------------------------------------------------------
# robot-vs-scene collision

def robot_scene_collision(robot, link_poses, scene):
    """Link capsules against the table halfspace and obstacle meshes."""
    obstacle_tris = scene.obstacle_triangles()
    for capsule, lp in zip(robot.link_capsules, link_poses):
        p0 = lp.apply(capsule.p0)
        p1 = lp.apply(capsule.p1)
        if collision.capsule_below_plane(p0, p1, capsule.radius, scene.table_height):
            return True
        if collision.capsule_mesh_collision(p0, p1, capsule.radius, obstacle_tris):
            return True
    return False


# ---------------------------------------------------------------------------
# accessibility filtering (collision -> IK -> primitives)

@dataclass
class GraspFilterResult:
    """Stage-wise surviving grasp ids at one placement pose.

    The stages are strictly nested: collision_free (gripper vs scene at the
    re-posed placement) contains ik_feasible (IK at the grasp key pose plus
    robot-vs-scene check) contains primitive_feasible (same at the
    pregrasp and retraction poses).
    """

    collision_free: list = field(default_factory=list)
    ik_feasible: list = field(default_factory=list)
    primitive_feasible: list = field(default_factory=list)
    joints: dict = field(default_factory=dict)  # gid -> (q_o, q_pre, q_ret)


def filter_grasps_at_pose(world_pose, candidate_ids, grasp_set, robot, scene,
                          omega=DEFAULT_OMEGA, backward=DEFAULT_BACKWARD,
                          ik_seed=0):
    """Run the collision / IK / primitive filter chain at one object pose."""
    obstacle_tris = scene.obstacle_triangles()
    home = robot.home()
    result = GraspFilterResult()
    for gid in candidate_ids:
        g = grasp_set.by_id(gid)
        world = world_pose.compose(g.pose)
        if gripper_collides(grasp_set.gripper, world, g.jaw_width,
                            obstacle_tris, scene.table_height):
            continue
        result.collision_free.append(gid)

        triple = primitive_poses(world, omega, backward)
        try:
            q_o = solve_ik(robot, triple.o, seed=home, rng_seed=ik_seed)
        except IKFailure:
            continue
        _, links_o = forward_kinematics(robot, q_o)
        if robot_scene_collision(robot, links_o, scene):
            continue
        result.ik_feasible.append(gid)

        try:
            q_pre = solve_ik(robot, triple.pre, seed=q_o, rng_seed=ik_seed)
            q_ret = solve_ik(robot, triple.ret, seed=q_o, rng_seed=ik_seed)
        except IKFailure:
            continue
        _, links_pre = forward_kinematics(robot, q_pre)
        _, links_ret = forward_kinematics(robot, q_ret)
        if robot_scene_collision(robot, links_pre, scene) or \
                robot_scene_collision(robot, links_ret, scene):
            continue
        result.primitive_feasible.append(gid)
        result.joints[gid] = (q_o, q_pre, q_ret)
    return result


def filter_robot_feasible(placements, position, robot, scene, grasp_set,
                          omega=DEFAULT_OMEGA, backward=DEFAULT_BACKWARD,
                          ik_seed=0, yaw=0.0):
    """Re-pose placements at a table position and keep robot-feasible grasps.

    Every input placement is returned (re-posed); those whose grasps were
    all filtered away are flagged empty rather than dropped, so callers can
    report which placements died.
    """
    x, y = position
    if not scene.contains_position(x, y):
        raise ValueError(f"regrasp position ({x}, {y}) outside table extent")
    out = []
    for pl in placements:
        world_pose = pose_at(pl.pose, x, y, scene.table_height, yaw)
        result = filter_grasps_at_pose(world_pose, pl.accessible_grasp_ids,
                                       grasp_set, robot, scene, omega,
                                       backward, ik_seed)
        survivors = [(gid, world_pose.compose(grasp_set.by_id(gid).pose))
                     for gid in result.primitive_feasible]
        out.append(Placement(pl.id, world_pose, pl.support_facet,
                             [gid for gid, _ in survivors],
                             {gid: wp for gid, wp in survivors}))
    return out
