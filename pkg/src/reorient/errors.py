"""Exception types shared across the planning pipeline."""


class PlanningError(Exception):
    """Base class for all planning failures."""


class DegenerateMesh(PlanningError):
    """Mesh has fewer than 4 vertices or all vertices are coplanar."""


class NonWatertight(PlanningError):
    """Mesh edges are not each shared by exactly two consistently wound triangles."""


class NoStablePlacement(PlanningError):
    """No convex-hull facet supports the object with the required stability margin."""


class NoAccessibleGrasp(PlanningError):
    """Every grasp was filtered out by collision or kinematic checks."""


class GraphDisconnected(PlanningError):
    """Start and goal are not connected in the regrasp graph."""


class IKFailure(PlanningError):
    """Inverse kinematics failed after exhausting the restart budget."""


class WrongDimension(PlanningError):
    """Joint vector length does not match the robot model."""


class TaskFileError(PlanningError):
    """Task file failed schema validation or referenced unreadable inputs."""
