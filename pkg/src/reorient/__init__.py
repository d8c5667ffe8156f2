"""Regrasp planning for object reorientation.

The pipeline: sample force-closure grasps on the object (grasp), enumerate
stable placements and their accessible grasps (placement), reduce them to
robot-reachable grasps with motion-primitive checks (kinematics), then
search the two-layer regrasp graph and expand the path into keyframes
(solver). The cli module wraps it all behind a task-file interface.
"""

from .errors import (DegenerateMesh, GraphDisconnected, IKFailure,
                     NoAccessibleGrasp, NonWatertight, NoStablePlacement,
                     PlanningError, TaskFileError, WrongDimension)
from .geometry import (ConvexHull, Pose, TriMesh, box_mesh, box_mesh_centered,
                       capsule_mesh, center_of_mass, convex_hull,
                       transform_point, transform_pose)
from .grasp import (Grasp, GraspSet, GripperModel, check_force_closure,
                    plan_grasps, robotiq85_like, sample_facet_pairs)
from .placement import (Placement, Scene, associate_grasps, stable_placements)
from .kinematics import (Capsule, Joint, PrimitiveTriple, RobotModel,
                         default_arm, filter_robot_feasible,
                         forward_kinematics, primitive_poses, solve_ik)
from .solver import (KeyFrame, PlanParams, PlanRequest, PlanResult,
                     RegraspGraph, build_graph, expand_sequence,
                     pick_shared_grasp, plan, search)
from .meshio import load_mesh, load_obj, load_stl, save_obj

__version__ = "0.1.0"
