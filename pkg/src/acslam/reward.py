"""Per-agent reward matrices, the distance-decayed spread penalty and goal selection.

Each matrix row is ``(reward, x, y)`` for one filtered frontier in the merged
frame.  After a goal is handed to one agent, every other agent's rows near that
goal are pushed down by ``K / d**2`` with ``K = max reward / targets assigned``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import NoCandidates, Unreachable
from .frontier import FilterParams, FrontierPoint, unknown_percentage
from .gridworld import OccupancyGrid, Pose2D
from .ledger import GoalLedger
from .planning import PlannerParams, distance_field, plan
from .uncertainty import PoseGraph, uncertainty_term

D_MIN = 0.25


@dataclass(frozen=True)
class RewardWeights:
    alpha: float = 1.0  # information gain
    beta: float = 0.5  # pose-graph uncertainty term
    gamma: float = 0.1  # per meter of path


@dataclass
class RewardRow:
    reward: float
    x: float
    y: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass
class RewardMatrix:
    agent: int
    rows: list[RewardRow] = field(default_factory=list)

    def max_reward(self) -> float | None:
        return max((r.reward for r in self.rows), default=None)

    def as_array(self) -> np.ndarray:
        return np.array([[r.reward, r.x, r.y] for r in self.rows]).reshape(-1, 3)


def combine_reward(info_gain: float, u: float, d_path: float, weights: RewardWeights) -> float:
    return weights.alpha * info_gain + weights.beta * u - weights.gamma * d_path


def compute_reward(pose: Pose2D, frontier: FrontierPoint, merged: OccupancyGrid, g: PoseGraph,
                   fp: FilterParams, weights: RewardWeights = RewardWeights(),
                   planner: PlannerParams = PlannerParams(), d_path: float | None = None) -> float:
    """``alpha * IG + beta * u - gamma * d_path`` for one frontier.

    ``d_path`` is the planner cost in meters on the merged map; pass it in to
    skip planning.  Raises :class:`Unreachable` when no path exists.
    """
    if d_path is None:
        d_path = plan(merged, pose.xy, frontier.position, planner).cost
    if not math.isfinite(d_path):
        raise Unreachable(f"frontier {frontier.position} is unreachable")
    ig = unknown_percentage(merged, frontier.position, fp.rad) / 100.0
    return combine_reward(ig, uncertainty_term(g), d_path, weights)


def build_reward_matrix(agent: int, pose: Pose2D, frontiers: Sequence[FrontierPoint],
                        merged: OccupancyGrid, g: PoseGraph, fp: FilterParams,
                        weights: RewardWeights = RewardWeights(),
                        planner: PlannerParams = PlannerParams(),
                        eps_pt: float = 0.3) -> RewardMatrix:
    """Reward every reachable frontier from one shortest-path sweep; unreachable rows are dropped."""
    m = RewardMatrix(agent)
    if not frontiers:
        return m
    dist = distance_field(merged, pose.xy, planner)
    u = uncertainty_term(g)
    for f in frontiers:
        if any(math.dist(f.position, r.position) <= eps_pt for r in m.rows):
            continue
        if not merged.contains(f.x, f.y):
            continue
        d = float(dist[merged.world_to_cell(f.x, f.y)])
        if not math.isfinite(d):
            continue
        ig = unknown_percentage(merged, f.position, fp.rad) / 100.0
        m.rows.append(RewardRow(combine_reward(ig, u, d, weights), f.x, f.y))
    return m


def spread_penalty(K: float, d: float, d_min: float = D_MIN) -> float:
    return K / max(d, d_min) ** 2


def apply_spread(m: RewardMatrix, goal: Sequence[float], targets_assigned: int,
                 eps_pt: float = 0.3, d_min: float = D_MIN) -> float | None:
    """Penalise one matrix around ``goal`` and drop rows at the goal; return the K used.

    K is taken from the matrix's current maximum before the goal row is
    removed.  Its magnitude is used so the penalty stays subtractive when all
    rewards are negative.
    """
    if targets_assigned < 1:
        raise ValueError("targets_assigned must be at least 1")
    top = m.max_reward()
    m.rows = [r for r in m.rows if math.dist(r.position, goal) > eps_pt]
    if top is None:
        return None
    K = max(abs(top), 1e-9) / targets_assigned
    for r in m.rows:
        r.reward -= spread_penalty(K, math.dist(r.position, goal), d_min)
    return K


def spread_update(matrices: Mapping[int, RewardMatrix], assigned_goal: Sequence[float],
                  ledger: GoalLedger, assigning_agent: int | None = None,
                  d_min: float = D_MIN) -> dict[int, float | None]:
    """Apply the spread penalty to every matrix except the assigning agent's.

    Rows at the assigned goal are removed from all matrices.  Matrices are
    changed in place; the returned dict maps agent id to the K applied.
    """
    count = ledger.targets_assigned_count
    ks = {}
    for agent, m in matrices.items():
        if agent == assigning_agent:
            m.rows = [r for r in m.rows if math.dist(r.position, assigned_goal) > ledger.eps_pt]
            continue
        ks[agent] = apply_spread(m, assigned_goal, count, ledger.eps_pt, d_min)
    return ks


def select_goal(m: RewardMatrix, ledger: GoalLedger, tick: int = 0) -> FrontierPoint:
    """Highest-reward row not blocked by the ledger; ties go to lower y, then lower x."""
    best = None
    for r in m.rows:
        if ledger.blocks(r.position, tick):
            continue
        if best is None or (-r.reward, r.y, r.x) < (-best.reward, best.y, best.x):
            best = r
    if best is None:
        raise NoCandidates(f"agent {m.agent} has no selectable frontier")
    return FrontierPoint(best.x, best.y, source_agent=m.agent)
