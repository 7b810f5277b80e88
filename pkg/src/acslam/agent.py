"""Per-robot loop: sense, map, extend the pose graph, follow a planned path, talk to the server."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import NoPath, StartInObstacle
from .frontier import FrontierPoint, detect_frontiers
from .gridworld import (OCCUPIED, OccupancyGrid, Point, Pose2D, SensorParams,
                        Transform2D, integrate_scan, raycast_scan)
from .ledger import ABANDONED, REACHED
from .planning import PlannerParams, inflate, plan, plan_path  # noqa: F401  (plan_path re-exported)
from .uncertainty import PoseGraph, add_odometry_node, try_loop_closure


class AgentStatus(str, Enum):
    IDLE = "idle"
    AWAITING_GOAL = "awaiting_goal"
    NAVIGATING = "navigating"
    BLOCKED = "blocked"


@dataclass(frozen=True)
class AgentParams:
    sensor: SensorParams = SensorParams()
    speed: float = 0.5  # meters per tick
    goal_tol: float = 0.5
    replan_limit: int = 3
    planner: PlannerParams = PlannerParams()
    loop_radius: float = 1.0
    loop_weight: float = 5.0
    loop_min_gap: int = 10
    odom_eps: float = 0.05


# Outgoing protocol actions, in the agent's own frame.

@dataclass(frozen=True)
class SubmitFrontiers:
    agent: int
    points: tuple[FrontierPoint, ...]


@dataclass(frozen=True)
class RequestGoal:
    agent: int


@dataclass(frozen=True)
class ReportStatus:
    agent: int
    status: str


@dataclass
class Agent:
    """Robot state.  ``pose`` and ``local_map`` live in the agent frame; ``transform``
    maps that frame into the merged/world frame."""

    id: int
    pose: Pose2D
    local_map: OccupancyGrid
    params: AgentParams = AgentParams()
    transform: Transform2D = Transform2D()
    pose_graph: PoseGraph = field(default=None)
    active_goal: Point | None = None
    path: list[Point] = field(default_factory=list)
    status: AgentStatus = AgentStatus.IDLE
    failed_replans: int = 0
    distance_travelled: float = 0.0
    _last_node: Pose2D | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.pose_graph is None:
            self.pose_graph = PoseGraph.from_spawn(self.pose)
        self._last_node = self.pose_graph.nodes[-1]

    @classmethod
    def spawn(cls, agent_id: int, world_pose: Pose2D, truth: OccupancyGrid,
              params: AgentParams = AgentParams()) -> "Agent":
        """Agent whose frame origin is its spawn position (heading kept in world terms)."""
        T = Transform2D(0.0, (world_pose.x, world_pose.y))
        local_origin = (truth.origin[0] - world_pose.x, truth.origin[1] - world_pose.y)
        local = OccupancyGrid.filled(truth.width, truth.height, truth.resolution, local_origin)
        return cls(agent_id, Pose2D(0.0, 0.0, world_pose.theta), local, params, T)

    @property
    def world_pose(self) -> Pose2D:
        return self.transform.apply_pose(self.pose)

    # -- helpers -------------------------------------------------------------------

    def _replan(self) -> bool:
        try:
            pts = plan(self.local_map, self.pose.xy, self.active_goal, self.params.planner).points
        except (NoPath, StartInObstacle):
            self.path = []
            self.status = AgentStatus.BLOCKED
            self.failed_replans += 1
            return False
        self.path = pts[1:] if len(pts) > 1 else [tuple(self.active_goal)]
        self.status = AgentStatus.NAVIGATING
        return True

    def _path_blocked(self) -> bool:
        blocked = inflate(self.local_map, self.params.planner.inflation)
        here = self.local_map.world_to_cell(*self.pose.xy)
        for x, y in self.path:
            cell = self.local_map.world_to_cell(x, y)
            if cell != here and blocked[cell]:
                return True
        return False

    def _near_goal(self) -> bool:
        return math.dist(self.pose.xy, self.active_goal) <= self.params.goal_tol

    def _advance(self, truth: OccupancyGrid) -> None:
        budget = self.params.speed
        x, y = self.pose.xy
        heading = self.pose.theta
        while budget > 1e-12 and self.path:
            tx, ty = self.path[0]
            wx, wy = self.transform.apply((tx, ty))
            if truth.state_at(wx, wy) == OCCUPIED:
                # bumped into an unseen obstacle: record it and force a replan
                r, c = self.local_map.world_to_cell(tx, ty)
                self.local_map.cells[r, c] = OCCUPIED
                self.local_map.invalidate()
                break
            d = math.hypot(tx - x, ty - y)
            if d > 1e-12:
                heading = math.atan2(ty - y, tx - x)
            if d <= budget:
                x, y = tx, ty
                budget -= d
                self.path.pop(0)
            else:
                x += (tx - x) * budget / d
                y += (ty - y) * budget / d
                budget = 0.0
        moved = math.hypot(x - self.pose.x, y - self.pose.y)
        self.distance_travelled += moved
        self.pose = Pose2D(x, y, heading)

    # -- protocol inputs -----------------------------------------------------------

    def receive_goal(self, goal_world: Point) -> None:
        self.active_goal = self.transform.inverse().apply(goal_world)
        self.failed_replans = 0
        self._replan()

    def receive_no_candidates(self) -> None:
        self.status = AgentStatus.IDLE

    # -- one simulation step ---------------------------------------------------------

    def tick(self, truth: OccupancyGrid) -> list:
        """Sense, update the pose graph, navigate, and return protocol actions."""
        actions = []
        obs = raycast_scan(truth, self.world_pose, self.params.sensor)
        integrate_scan(self.local_map, obs)

        step = math.hypot(self.pose.x - self._last_node.x, self.pose.y - self._last_node.y)
        if step > 1e-9:
            add_odometry_node(self.pose_graph, self.pose, 1.0 / (step + self.params.odom_eps))
            try_loop_closure(self.pose_graph, self.params.loop_radius, self.params.loop_weight,
                             self.params.loop_min_gap)
            self._last_node = self.pose

        if self.status in (AgentStatus.NAVIGATING, AgentStatus.BLOCKED):
            if self._near_goal():
                actions.append(self._finish(REACHED))
            else:
                if self.status is AgentStatus.NAVIGATING and (not self.path or self._path_blocked()):
                    self._replan()
                elif self.status is AgentStatus.BLOCKED:
                    self._replan()
                if self.status is AgentStatus.BLOCKED and self.failed_replans >= self.params.replan_limit:
                    actions.append(self._finish(ABANDONED))
                elif self.status is AgentStatus.NAVIGATING:
                    self._advance(truth)
                    if self._near_goal():
                        actions.append(self._finish(REACHED))

        if self.status is AgentStatus.IDLE:
            frontiers = detect_frontiers(self.local_map, self.id)
            actions.append(SubmitFrontiers(self.id, tuple(frontiers)))
            actions.append(RequestGoal(self.id))
            self.status = AgentStatus.AWAITING_GOAL
        return actions

    def _finish(self, status: str) -> ReportStatus:
        self.active_goal = None
        self.path = []
        self.failed_replans = 0
        self.status = AgentStatus.IDLE
        return ReportStatus(self.id, status)


def agent_tick(agent: Agent, truth: OccupancyGrid) -> list:
    return agent.tick(truth)
