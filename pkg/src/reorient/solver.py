"""Two-layer regrasp graph and the end-to-end reorientation planner.

Layer 1 connects two placements when they share at least one grasp that is
identical in the object's local frame; layer 2 records which grasps. A
shortest path on layer 1 alternates pick and place nodes; expansion turns
each adjacent pair into six keyframes via the motion-primitive offsets.
"""

import heapq
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import GraphDisconnected, NoAccessibleGrasp, NoStablePlacement
from .geometry import Pose, convex_hull, center_of_mass
from .grasp import plan_grasps, robotiq85_like
from .placement import (Placement, Scene, associate_grasps, make_placement,
                        pose_at, stable_placements, support_polygon_margin,
                        DEFAULT_STABILITY_MARGIN)
from .kinematics import (DEFAULT_BACKWARD, DEFAULT_OMEGA, filter_grasps_at_pose,
                         filter_robot_feasible, primitive_poses, solve_ik)

JAW_OPEN = "open"
JAW_CLOSED = "closed"

LABELS = ("pregrasp", "grasp", "retract", "place_retract", "place", "release")


@dataclass
class GraphNode:
    id: int
    kind: str  # start | goal | intermediate
    placement: Placement


@dataclass
class RegraspGraph:
    nodes: list
    layer1_edges: set = field(default_factory=set)       # {(i, j)} with i < j
    layer2_edges: dict = field(default_factory=dict)     # (i, j) -> [grasp ids]

    @property
    def start_id(self):
        return next(n.id for n in self.nodes if n.kind == "start")

    @property
    def goal_id(self):
        return next(n.id for n in self.nodes if n.kind == "goal")

    def neighbors(self, i):
        out = []
        for a, b in self.layer1_edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def shared(self, i, j):
        return self.layer2_edges[(min(i, j), max(i, j))]


def build_graph(filtered_placements, start_placement, goal_placement):
    """Assemble both graph layers from robot-feasible placements.

    Shared grasps are found by id intersection, which is exact because
    every accessible set descends from the same GraspSet. Start and goal
    connect through the identical rule; a layer-1 edge exists iff its
    layer-2 grasp list is nonempty.
    """
    nodes = [GraphNode(0, "start", start_placement)]
    for pl in filtered_placements:
        nodes.append(GraphNode(len(nodes), "intermediate", pl))
    nodes.append(GraphNode(len(nodes), "goal", goal_placement))

    graph = RegraspGraph(nodes)
    for i in range(len(nodes)):
        acc_i = set(nodes[i].placement.accessible_grasp_ids)
        if not acc_i:
            continue
        for j in range(i + 1, len(nodes)):
            shared = sorted(acc_i.intersection(nodes[j].placement.accessible_grasp_ids))
            if shared:
                graph.layer1_edges.add((i, j))
                graph.layer2_edges[(i, j)] = shared
    return graph


def search(graph):
    """Dijkstra on layer 1 with unit edge weights.

    Ties break toward the smallest node id: the heap orders by
    (distance, node id) and settled predecessors are never replaced at
    equal distance.
    """
    start, goal = graph.start_id, graph.goal_id
    dist = {start: 0}
    prev = {}
    heap = [(0, start)]
    settled = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in settled:
            continue
        settled.add(u)
        if u == goal:
            break
        for v in graph.neighbors(u):
            nd = d + 1
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if goal not in settled:
        raise GraphDisconnected("no regrasp path from start to goal")
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    return path[::-1]


def pick_shared_grasp(node_i, node_j, graph):
    """Deterministic choice among the shared grasps: the smallest id."""
    return min(graph.shared(node_i, node_j))


@dataclass
class KeyFrame:
    index: int
    label: str
    tcp_pose: Pose
    joints: np.ndarray
    jaw: str          # open | closed
    jaw_width: float
    object_pose: Pose
    grasp_id: int

    def to_dict(self):
        return {"index": self.index, "label": self.label,
                "tcp_pose": self.tcp_pose.to_dict(),
                "joints": self.joints.tolist(),
                "jaw": self.jaw, "jaw_width": self.jaw_width,
                "object_pose": self.object_pose.to_dict(),
                "grasp_id": self.grasp_id}


def _translated(pose, delta):
    return Pose(pose.position + delta, pose.rotation)


def expand_sequence(path, graph, robot, grasp_set, omega=DEFAULT_OMEGA,
                    goal_backward=DEFAULT_BACKWARD, ik_seed=0):
    """Expand a layer-1 path into keyframes.

    Each adjacent (pick, place) node pair emits six frames: pregrasp,
    grasp, retract at the pick node, then place_retract, place, release at
    the place node. The jaw closes at the grasp frame and opens as the
    place frame completes; the object rides the gripper from retract
    through place. Retractions use the upward direction except at the
    goal node, which uses goal_backward.
    """
    up = DEFAULT_BACKWARD
    open_width = grasp_set.gripper.max_jaw_width
    frames = []
    home = robot.home()

    def ik_chain(triple):
        q_o = solve_ik(robot, triple.o, seed=home, rng_seed=ik_seed)
        q_pre = solve_ik(robot, triple.pre, seed=q_o, rng_seed=ik_seed)
        q_ret = solve_ik(robot, triple.ret, seed=q_o, rng_seed=ik_seed)
        return q_o, q_pre, q_ret

    for s in range(len(path) - 1):
        pick = graph.nodes[path[s]]
        place = graph.nodes[path[s + 1]]
        gid = pick_shared_grasp(pick.id, place.id, graph)
        width = grasp_set.by_id(gid).jaw_width

        backward_place = goal_backward if place.kind == "goal" else up
        pick_triple = primitive_poses(pick.placement.world_grasp_poses[gid], omega, up)
        place_triple = primitive_poses(place.placement.world_grasp_poses[gid],
                                       omega, backward_place)
        qo_a, qpre_a, qret_a = ik_chain(pick_triple)
        qo_b, qpre_b, qret_b = ik_chain(place_triple)

        obj_pick = pick.placement.pose
        obj_place = place.placement.pose
        obj_lifted = _translated(obj_pick, omega * up)
        obj_lowering = _translated(obj_place, omega * backward_place)

        step = [
            ("pregrasp", pick_triple.pre, qpre_a, JAW_OPEN, open_width, obj_pick),
            ("grasp", pick_triple.o, qo_a, JAW_CLOSED, width, obj_pick),
            ("retract", pick_triple.ret, qret_a, JAW_CLOSED, width, obj_lifted),
            ("place_retract", place_triple.ret, qret_b, JAW_CLOSED, width, obj_lowering),
            ("place", place_triple.o, qo_b, JAW_CLOSED, width, obj_place),
            ("release", place_triple.pre, qpre_b, JAW_OPEN, open_width, obj_place),
        ]
        for label, tcp, q, jaw, w, obj in step:
            frames.append(KeyFrame(len(frames), label, tcp, q, jaw, w, obj, gid))
    return frames


# ---------------------------------------------------------------------------
# full pipeline

@dataclass
class PlanParams:
    mu: float = 0.5
    omega: float = DEFAULT_OMEGA
    density: float = 400.0
    stability_margin: float = DEFAULT_STABILITY_MARGIN
    seed: int = 0
    n_approach: int = 8

    @staticmethod
    def from_dict(d):
        allowed = {k: d[k] for k in
                   ("mu", "omega", "density", "stability_margin", "seed", "n_approach")
                   if k in d}
        return PlanParams(**allowed)

    def to_dict(self):
        return {"mu": self.mu, "omega": self.omega, "density": self.density,
                "stability_margin": self.stability_margin, "seed": self.seed,
                "n_approach": self.n_approach}


@dataclass
class PlanRequest:
    mesh: object
    start_pose: Pose
    goal_pose: Pose
    scene: object
    robot: object
    goal_backward: np.ndarray = field(default_factory=lambda: DEFAULT_BACKWARD.copy())
    params: PlanParams = field(default_factory=PlanParams)
    gripper: object = field(default_factory=robotiq85_like)


@dataclass
class PlanResult:
    keyframes: list
    diagnostics: dict
    graph: object = None  # RegraspGraph, kept for reporting; not serialized

    def to_dict(self, request_echo=None):
        return {"request_echo": request_echo or {},
                "keyframes": [kf.to_dict() for kf in self.keyframes],
                "diagnostics": self.diagnostics}


def find_support_facet(hull, com, pose, table_height, stability_margin,
                       angle_tol=1e-4, height_tol=1e-6):
    """Identify which hull facet a world pose rests on, or raise.

    The facet's world normal must point down within angle_tol, its plane
    must sit on the table within height_tol, and the placement must pass
    the same margin rule used for canonical placements.
    """
    down = np.array([0.0, 0.0, -1.0])
    for idx, facet in enumerate(hull.facets):
        world_n = pose.rotation @ facet.normal
        if np.dot(world_n, down) < np.cos(angle_tol):
            continue
        boundary_z = pose.apply_many(facet.boundary_points(hull.hull))[:, 2]
        if np.max(np.abs(boundary_z - table_height)) > height_tol:
            continue
        if support_polygon_margin(facet, hull.hull, com) < stability_margin:
            continue
        return idx
    raise NoStablePlacement("pose does not rest a hull facet flush on the table")


def plan(request, grasp_set=None, canonical_placements=None):
    """Run the full pipeline and return keyframes plus per-phase diagnostics.

    grasp_set and canonical_placements may be supplied from caches; when
    omitted they are computed from the request. Phase times mirror the
    cost structure: grasps, placements, IK+CD at the start pose, at the
    regrasp position, at the goal pose, then graph search + expansion.
    """
    p = request.params
    scene = request.scene
    times = {}
    notes = []

    if request.start_pose.almost_equal(request.goal_pose, 1e-6, 1e-4):
        return PlanResult([], {
            "phase_times_s": {}, "graph": {"nodes": 0, "l1_edges": 0, "l2_edges": 0},
            "regrasp_count": 0, "notes": ["already at goal"]})

    t0 = time.perf_counter()
    if grasp_set is None:
        grasp_set = plan_grasps(request.mesh, request.gripper, mu=p.mu,
                                density=p.density, n_approach=p.n_approach,
                                seed=p.seed)
    times["grasps"] = time.perf_counter() - t0
    if len(grasp_set) == 0:
        raise NoAccessibleGrasp("grasp planner produced an empty set")

    t0 = time.perf_counter()
    hull = convex_hull(request.mesh)
    com = center_of_mass(request.mesh)
    if canonical_placements is None:
        canonical_placements = compute_canonical_placements(
            request.mesh, hull, com, grasp_set, scene, p.stability_margin)
    times["placements"] = time.perf_counter() - t0

    start_facet = find_support_facet(hull, com, request.start_pose,
                                     scene.table_height, p.stability_margin)
    goal_facet = find_support_facet(hull, com, request.goal_pose,
                                    scene.table_height, p.stability_margin)

    stage_counts = {}

    def filter_at(pose, backward, facet, node_name):
        candidates = [gid for gid, _ in associate_grasps(pose, grasp_set, scene)]
        result = filter_grasps_at_pose(pose, candidates, grasp_set, request.robot,
                                       scene, p.omega, backward, ik_seed=p.seed)
        stage_counts[node_name] = {
            "collision_free": len(result.collision_free),
            "ik_feasible": len(result.ik_feasible),
            "primitive_feasible": len(result.primitive_feasible)}
        survivors = [(gid, pose.compose(grasp_set.by_id(gid).pose))
                     for gid in result.primitive_feasible]
        return make_placement(-1, pose, facet, survivors)

    t0 = time.perf_counter()
    start_placement = filter_at(request.start_pose, DEFAULT_BACKWARD,
                                start_facet, "start")
    times["ik_cd_init"] = time.perf_counter() - t0
    if start_placement.empty:
        raise NoAccessibleGrasp("no robot-feasible grasp at the start pose")

    t0 = time.perf_counter()
    goal_placement = filter_at(request.goal_pose, request.goal_backward,
                               goal_facet, "goal")
    times["ik_cd_goal"] = time.perf_counter() - t0
    if goal_placement.empty:
        raise NoAccessibleGrasp("no robot-feasible grasp at the goal pose")

    t0 = time.perf_counter()
    intermediates, regrasp_position = _filter_intermediates(
        canonical_placements, request.robot, scene, grasp_set, p)
    times["ik_cd_regrasp"] = time.perf_counter() - t0
    if regrasp_position is not None:
        notes.append(f"regrasp position {list(regrasp_position)}")
    for pl in intermediates:
        stage_counts[f"intermediate_{pl.id}"] = {
            "primitive_feasible": len(pl.accessible_grasp_ids)}

    t0 = time.perf_counter()
    graph = build_graph(intermediates, start_placement, goal_placement)
    path = search(graph)
    frames = expand_sequence(path, graph, request.robot, grasp_set,
                             p.omega, request.goal_backward, ik_seed=p.seed)
    times["graph_search"] = time.perf_counter() - t0

    diagnostics = {
        "phase_times_s": times,
        "graph": {"nodes": len(graph.nodes),
                  "l1_edges": len(graph.layer1_edges),
                  "l2_edges": sum(len(v) for v in graph.layer2_edges.values())},
        "path": path,
        "regrasp_count": len(path) - 2,
        "filter_stages": stage_counts,
        "notes": notes,
    }
    return PlanResult(frames, diagnostics, graph)


def compute_canonical_placements(mesh, hull, com, grasp_set, scene,
                                 stability_margin=DEFAULT_STABILITY_MARGIN):
    """Canonical placements with their table-survivor grasp sets.

    Association against the bare table is position-independent (the table
    is a halfspace), so these sets are valid at any xy position and make a
    reusable cache; obstacle and robot checks happen later per position.
    """
    table_only = Scene(scene.table_height, scene.table_extent)
    out = []
    for pid, (facet, canonical) in enumerate(stable_placements(mesh, hull, com,
                                                               stability_margin)):
        rest = pose_at(canonical, 0.0, 0.0, scene.table_height)
        ids = [gid for gid, _ in associate_grasps(rest, grasp_set, table_only)]
        # stored with the canonical (origin, z=0) pose; re-posed per position
        out.append(Placement(pid, canonical, facet, ids,
                             {gid: canonical.compose(grasp_set.by_id(gid).pose)
                              for gid in ids}))
    return out


def _filter_intermediates(canonical_placements, robot, scene, grasp_set, params):
    """First candidate regrasp position with any robot-feasible placement."""
    for position in scene.candidate_regrasp_positions:
        filtered = filter_robot_feasible(canonical_placements, position, robot,
                                         scene, grasp_set, params.omega,
                                         DEFAULT_BACKWARD, ik_seed=params.seed)
        if any(not pl.empty for pl in filtered):
            return filtered, position
    return [], None
