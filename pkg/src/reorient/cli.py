"""Command-line front end.

`reorient plan task.json` processes the task's objects in order, writes one
sequence JSON per object plus a combined report (CSV, graph and timing
figures), and optionally dumps per-keyframe scene geometry as OBJ files.
Planned objects become obstacles for the objects after them.
"""

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import report
from .errors import PlanningError, TaskFileError
from .geometry import Pose, box_mesh_centered, capsule_mesh
from .grasp import GraspSet, GripperModel, plan_grasps, robotiq85_like
from .kinematics import RobotModel, default_arm, forward_kinematics
from .meshio import load_mesh, save_obj
from .placement import Placement, Scene
from .solver import (PlanParams, PlanRequest, compute_canonical_placements,
                     convex_hull, center_of_mass, plan)


@dataclass
class TaskObject:
    mesh_path: str
    start_pose: Pose
    goal_pose: Pose
    goal_backward: np.ndarray


@dataclass
class Task:
    objects: list
    scene: Scene
    robot: RobotModel
    gripper: GripperModel
    params: PlanParams
    cache_dir: str


def _pose_from(d, where):
    try:
        pose = Pose.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        raise TaskFileError(f"{where}: bad pose: {exc}") from exc
    if not pose.is_valid(1e-6):
        raise TaskFileError(f"{where}: rotation is not orthonormal")
    return pose


def load_task(path):
    """Parse and validate a task file; all paths resolve relative to it."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise TaskFileError(f"cannot read task file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise TaskFileError(f"{path}: invalid JSON: {exc}") from exc
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    if "objects" not in raw or not isinstance(raw["objects"], list):
        raise TaskFileError(f"{path}: missing 'objects' list")
    objects = []
    for k, od in enumerate(raw["objects"]):
        where = f"{path}: objects[{k}]"
        for key in ("mesh", "start_pose", "goal_pose"):
            if key not in od:
                raise TaskFileError(f"{where}: missing '{key}'")
        backward = np.asarray(od.get("goal_backward", [0.0, 0.0, 1.0]), dtype=float)
        n = np.linalg.norm(backward)
        if n < 1e-9:
            raise TaskFileError(f"{where}: goal_backward must be nonzero")
        objects.append(TaskObject(resolve(od["mesh"]),
                                  _pose_from(od["start_pose"], where),
                                  _pose_from(od["goal_pose"], where),
                                  backward / n))

    sd = raw.get("scene", {})
    try:
        obstacles = []
        for k, ob in enumerate(sd.get("obstacles", [])):
            mesh = load_mesh(resolve(ob["mesh"]), ob.get("scale", 1.0))
            obstacles.append((mesh, _pose_from(ob["pose"], f"{path}: obstacles[{k}]")))
        scene = Scene(table_height=float(sd.get("table_height", 0.0)),
                      table_extent=tuple(map(tuple, sd.get("table_extent",
                                                           ((-1.0, 1.0), (-1.0, 1.0))))),
                      obstacles=obstacles,
                      candidate_regrasp_positions=[tuple(p) for p in
                                                   sd.get("regrasp_positions", [])])
    except (OSError, ValueError, KeyError) as exc:
        raise TaskFileError(f"{path}: bad scene: {exc}") from exc

    try:
        if "robot" in raw and raw["robot"]:
            robot = RobotModel.load(resolve(raw["robot"]))
        else:
            robot = default_arm()
        if "robot_base" in raw:
            robot = robot.rebased(_pose_from(raw["robot_base"], f"{path}: robot_base"))
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise TaskFileError(f"{path}: bad robot config: {exc}") from exc

    gripper = (GripperModel.from_dict(raw["gripper"]) if "gripper" in raw
               else robotiq85_like())
    try:
        params = PlanParams.from_dict(raw.get("parameters", {}))
    except TypeError as exc:
        raise TaskFileError(f"{path}: bad parameters: {exc}") from exc
    cache_dir = resolve(raw["cache_dir"]) if raw.get("cache_dir") else None
    return Task(objects, scene, robot, gripper, params, cache_dir)


# ---------------------------------------------------------------------------
# caches

def mesh_digest(mesh):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(mesh.vertices).tobytes())
    h.update(np.ascontiguousarray(mesh.triangles).tobytes())
    return h.hexdigest()


def _digest(parts):
    return hashlib.sha256(json.dumps(parts, sort_keys=True).encode()).hexdigest()[:16]


def load_or_plan_grasps(mesh, gripper, params, cache_dir, use_cache):
    obj_hash = mesh_digest(mesh)
    key = _digest({"object": obj_hash, "gripper": gripper.to_dict(),
                   "mu": params.mu, "density": params.density,
                   "n_approach": params.n_approach, "seed": params.seed})
    path = os.path.join(cache_dir, f"grasps_{key}.json") if cache_dir else None
    if use_cache and path and os.path.exists(path):
        return GraspSet.load(path)
    grasp_set = plan_grasps(mesh, gripper, mu=params.mu, density=params.density,
                            n_approach=params.n_approach, seed=params.seed)
    if use_cache and path:
        os.makedirs(cache_dir, exist_ok=True)
        grasp_set.save(path)
    return grasp_set


def load_or_compute_placements(mesh, grasp_set, scene, params, cache_dir, use_cache):
    obj_hash = mesh_digest(mesh)
    key = _digest({"object": obj_hash, "gripper": grasp_set.gripper.to_dict(),
                   "mu": params.mu, "density": params.density,
                   "n_approach": params.n_approach, "seed": params.seed,
                   "stability_margin": params.stability_margin,
                   "table_height": scene.table_height})
    path = os.path.join(cache_dir, f"placements_{key}.json") if cache_dir else None
    if use_cache and path and os.path.exists(path):
        with open(path) as fh:
            data = json.load(fh)
        return [Placement(pd["id"], Pose.from_dict(pd["pose"]), pd["support_facet"],
                          list(pd["accessible_grasp_ids"]),
                          {gid: Pose.from_dict(pd["pose"]).compose(grasp_set.by_id(gid).pose)
                           for gid in pd["accessible_grasp_ids"]})
                for pd in data["placements"]]
    hull = convex_hull(mesh)
    com = center_of_mass(mesh)
    placements = compute_canonical_placements(mesh, hull, com, grasp_set, scene,
                                              params.stability_margin)
    if use_cache and path:
        os.makedirs(cache_dir, exist_ok=True)
        with open(path, "w") as fh:
            json.dump({"object_hash": obj_hash,
                       "placements": [{"id": pl.id,
                                       "support_facet": pl.support_facet,
                                       "pose": pl.pose.to_dict(),
                                       "accessible_grasp_ids": pl.accessible_grasp_ids}
                                      for pl in placements]}, fh)
    return placements


# ---------------------------------------------------------------------------
# keyframe geometry dumps

def dump_keyframes(frames, object_mesh, scene, robot, gripper, out_dir):
    """One OBJ per keyframe: object, obstacles, gripper boxes, link capsules.

    The object's vertices are written first and in mesh order, so its pose
    can be re-measured from the file by rigid registration.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for kf in frames:
        groups = [("object", object_mesh.transformed(kf.object_pose))]
        for i, (mesh, pose) in enumerate(scene.obstacles):
            groups.append((f"obstacle_{i}", mesh.transformed(pose)))
        for i, (local, half) in enumerate(gripper.body_boxes(kf.jaw_width)):
            box = box_mesh_centered(2.0 * np.asarray(half))
            groups.append((f"gripper_{i}",
                           box.transformed(kf.tcp_pose.compose(local))))
        _, links = forward_kinematics(robot, kf.joints)
        for i, (capsule, lp) in enumerate(zip(robot.link_capsules, links)):
            groups.append((f"link_{i}",
                           capsule_mesh(lp.apply(capsule.p0), lp.apply(capsule.p1),
                                        capsule.radius, segments=16)))
        path = os.path.join(out_dir, f"frame_{kf.index:03d}.obj")
        save_obj(path, groups, comments=[f"keyframe {kf.index} {kf.label}"])
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# the plan command

def run_plan(task_path, out_dir=None, use_cache=True, dump_dir=None,
             seed=None, scale=1.0, timing=False, stream=sys.stdout):
    """Plan every object in the task. Returns the process exit code."""
    try:
        task = load_task(task_path)
        meshes = [load_mesh(obj.mesh_path, scale) for obj in task.objects]
    except (TaskFileError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if seed is not None:
        task.params.seed = seed
    out_dir = out_dir or os.path.splitext(os.path.abspath(task_path))[0] + "_out"
    os.makedirs(out_dir, exist_ok=True)

    scene = task.scene
    rows = []
    failed = False
    for k, (obj, mesh) in enumerate(zip(task.objects, meshes)):
        name = f"{k}_{os.path.splitext(os.path.basename(obj.mesh_path))[0]}"
        row = {"object": name, "status": "ok", "error": ""}
        try:
            grasp_set = load_or_plan_grasps(mesh, task.gripper, task.params,
                                            task.cache_dir, use_cache)
            placements = load_or_compute_placements(mesh, grasp_set, scene,
                                                    task.params, task.cache_dir,
                                                    use_cache)
            request = PlanRequest(mesh, obj.start_pose, obj.goal_pose, scene,
                                  task.robot, obj.goal_backward, task.params,
                                  task.gripper)
            result = plan(request, grasp_set, placements)
        except PlanningError as exc:
            row.update(status="failed", error=f"{type(exc).__name__}: {exc}")
            rows.append(row)
            print(f"object {name}: planning failed: {row['error']}", file=sys.stderr)
            failed = True
            break

        echo = {"mesh": obj.mesh_path, "scale": scale,
                "start_pose": obj.start_pose.to_dict(),
                "goal_pose": obj.goal_pose.to_dict(),
                "goal_backward": obj.goal_backward.tolist(),
                "parameters": task.params.to_dict()}
        seq_path = os.path.join(out_dir, f"sequence_{name}.json")
        with open(seq_path, "w") as fh:
            json.dump(result.to_dict(echo), fh, indent=1)
        print(f"object {name}: {len(result.keyframes)} keyframes, "
              f"{result.diagnostics['regrasp_count']} regrasps -> {seq_path}",
              file=stream)

        if dump_dir:
            dump_keyframes(result.keyframes, mesh, scene, task.robot,
                           task.gripper, os.path.join(dump_dir, name))
        if result.graph is not None:
            report.render_graph_figure(result.graph, result.diagnostics["path"],
                                       os.path.join(out_dir, f"graph_{name}.png"))

        times = result.diagnostics["phase_times_s"]
        row.update({"keyframes": len(result.keyframes),
                    "regrasp_count": result.diagnostics["regrasp_count"],
                    **result.diagnostics["graph"],
                    **{col: round(times.get(col, 0.0), 6)
                       for col in report.TIMING_COLUMNS}})
        rows.append(row)
        # planned object occupies its goal pose from now on
        scene = scene.with_extra_obstacle(mesh, obj.goal_pose)

    report.write_report(out_dir, rows)
    if any(r["status"] == "ok" for r in rows):
        report.render_timing_figure([r for r in rows if r["status"] == "ok"],
                                    os.path.join(out_dir, "timing.png"))
    if timing:
        print(report.format_timing_table([r for r in rows if r["status"] == "ok"]),
              file=stream)
    return 2 if failed else 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="reorient",
        description="Plan pick-and-place regrasp sequences that reorient objects.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("plan", help="run planning for a task file")
    p.add_argument("task", help="task JSON file")
    p.add_argument("--out", help="output directory (default: <task>_out)")
    p.add_argument("--no-cache", action="store_true",
                   help="ignore and do not write cache files")
    p.add_argument("--dump-keyframes", metavar="DIR",
                   help="write per-keyframe OBJ scene dumps under DIR")
    p.add_argument("--seed", type=int, help="override the task RNG seed")
    p.add_argument("--scale", type=float, default=1.0,
                   help="unit scale applied to object meshes")
    p.add_argument("--timing", action="store_true",
                   help="print a per-phase timing table")
    args = parser.parse_args(argv)

    if args.command == "plan":
        return run_plan(args.task, out_dir=args.out, use_cache=not args.no_cache,
                        dump_dir=args.dump_keyframes, seed=args.seed,
                        scale=args.scale, timing=args.timing)
    return 1


if __name__ == "__main__":
    sys.exit(main())
