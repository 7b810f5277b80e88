"""Comparison strategies: greedy nearest frontier and reward-only multi-agent selection."""

from __future__ import annotations

import math
from enum import Enum
from typing import Sequence

from .errors import NoCandidates
from .frontier import FilterParams, FrontierPoint, unknown_percentage
from .gridworld import OccupancyGrid, Pose2D
from .ledger import GoalLedger
from .planning import PlannerParams, distance_field
from .reward import RewardWeights, combine_reward
from .uncertainty import PoseGraph, uncertainty_term


class StrategyKind(str, Enum):
    OURS = "ours"
    MAGS = "mags"
    FRONTIER_GREEDY = "frontier"

    @classmethod
    def parse(cls, value: "str | StrategyKind") -> "StrategyKind":
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        aliases = {"greedy": cls.FRONTIER_GREEDY, "frontier_greedy": cls.FRONTIER_GREEDY}
        return aliases.get(v) or cls(v)


def _path_costs(pose: Pose2D, frontiers: Sequence[FrontierPoint], merged: OccupancyGrid,
                planner: PlannerParams) -> list[float]:
    dist = distance_field(merged, pose.xy, planner)
    out = []
    for f in frontiers:
        if merged.contains(f.x, f.y):
            out.append(float(dist[merged.world_to_cell(f.x, f.y)]))
        else:
            out.append(math.inf)
    return out


def greedy_select(pose: Pose2D, frontiers: Sequence[FrontierPoint], ledger: GoalLedger,
                  merged: OccupancyGrid, planner: PlannerParams = PlannerParams(),
                  tick: int = 0) -> FrontierPoint:
    """Nearest (by planner cost) frontier not already handed out."""
    best, best_key = None, None
    for f, d in zip(frontiers, _path_costs(pose, frontiers, merged, planner)):
        if not math.isfinite(d) or ledger.blocks(f.position, tick):
            continue
        key = (round(d, 9), f.y, f.x)  # equal-length paths may differ in the last bits
        if best_key is None or key < best_key:
            best, best_key = f, key
    if best is None:
        raise NoCandidates("no reachable unassigned frontier")
    return best


def mags_select(pose: Pose2D, frontiers: Sequence[FrontierPoint], merged: OccupancyGrid,
                g: PoseGraph, fp: FilterParams, weights: RewardWeights = RewardWeights(),
                planner: PlannerParams = PlannerParams()) -> FrontierPoint:
    """Argmax of the base reward over the raw frontier list; ignores other agents' goals."""
    u = uncertainty_term(g)
    best, best_key = None, None
    for f, d in zip(frontiers, _path_costs(pose, frontiers, merged, planner)):
        if not math.isfinite(d):
            continue
        ig = unknown_percentage(merged, f.position, fp.rad) / 100.0
        r = combine_reward(ig, u, d, weights)
        key = (-r, f.y, f.x)
        if best_key is None or key < best_key:
            best, best_key = f, key
    if best is None:
        raise NoCandidates("no reachable frontier")
    return best
