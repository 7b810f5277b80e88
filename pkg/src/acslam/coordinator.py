"""Central goal server.

Agents stage frontier lists and goal requests; the harness (or the socket
server) calls :meth:`Coordinator.decide` once per tick, which is the single
serialized point where the ledger, reward matrices and priorities change.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .baselines import StrategyKind, greedy_select, mags_select
from .errors import NoActiveGoal, NoCandidates, RoundIncomplete, StartInObstacle, UnknownAgent
from .frontier import FilterParams, FrontierPoint, adaptive_filter
from .gridworld import OccupancyGrid, Pose2D, Transform2D
from .ledger import ABANDONED, REACHED, GoalLedger, PriorityState
from .planning import PlannerParams, distance_field
from .reward import (D_MIN, RewardMatrix, RewardWeights, apply_spread, build_reward_matrix,
                     select_goal, spread_update)
from .uncertainty import PoseGraph


class ProtocolMode(str, Enum):
    SYNC = "sync"
    ASYNC = "async"

    @classmethod
    def parse(cls, value: "str | ProtocolMode") -> "ProtocolMode":
        if isinstance(value, cls):
            return value
        v = str(value).strip().lower()
        return {"synchronous": cls.SYNC, "asynchronous": cls.ASYNC}.get(v) or cls(v)


PERSIST_MODES = ("all", "per_unk", "none")


def persist_mode(value) -> str:
    if value is True:
        return "all"
    if value is False or value is None:
        return "none"
    v = str(value).strip().lower()
    if v not in PERSIST_MODES:
        raise ValueError(f"persist_filter must be one of {PERSIST_MODES}, got {value!r}")
    return v


@dataclass(frozen=True)
class CoordinatorConfig:
    mode: ProtocolMode = ProtocolMode.ASYNC
    strategy: StrategyKind = StrategyKind.OURS
    filter_params: FilterParams = FilterParams()
    weights: RewardWeights = RewardWeights()
    planner: PlannerParams = PlannerParams()
    goal_skip_wait: int = 3
    eps_pt: float = 0.3
    re_expose_ticks: int = 20
    requests_per_tick: int = 1
    sync_timeout: int | None = None
    d_min: float = D_MIN
    # which adapted filter parameters carry over to the next cycle: "all", "per_unk" or "none"
    persist_filter: str = "all"

    def __post_init__(self):
        object.__setattr__(self, "persist_filter", persist_mode(self.persist_filter))


@dataclass
class Reply:
    agent: int
    kind: str  # "goal_assignment" | "no_candidates"
    goal: FrontierPoint | None = None


@dataclass
class _Request:
    pose: Pose2D
    graph: PoseGraph
    tick: int


class EventLog:
    """Protocol events as ``{tick, agent, event, payload}`` records."""

    def __init__(self):
        self.records: list[dict] = []

    def emit(self, tick: int, agent: int | None, event: str, **payload) -> None:
        self.records.append({"tick": tick, "agent": agent, "event": event, "payload": payload})

    def lines(self) -> list[str]:
        return [json.dumps(r, sort_keys=True, separators=(",", ":")) for r in self.records]

    def write(self, path: str | Path) -> None:
        Path(path).write_text("".join(line + "\n" for line in self.lines()))

    @staticmethod
    def read(path: str | Path) -> list[dict]:
        return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def merge_points(submissions: Mapping[int, Sequence[FrontierPoint]] | Sequence[Sequence[FrontierPoint]],
                 eps_pt: float = 0.3) -> list[FrontierPoint]:
    """Union of all submissions; points within ``eps_pt`` of a kept point are dropped.

    Agents are visited in ascending id order (list index for sequences).
    """
    if isinstance(submissions, Mapping):
        groups = [submissions[k] for k in sorted(submissions)]
    else:
        groups = list(submissions)
    kept: list[FrontierPoint] = []
    for group in groups:
        for p in group:
            if all(math.dist(p.position, q.position) > eps_pt for q in kept):
                kept.append(p)
    return kept


def _round(v: float | None) -> float | None:
    return None if v is None else float(v)


class Coordinator:
    def __init__(self, config: CoordinatorConfig = CoordinatorConfig(), log: EventLog | None = None):
        self.config = config
        self.log = log if log is not None else EventLog()
        self.filter_params = config.filter_params
        self.ledger = GoalLedger(eps_pt=config.eps_pt, re_expose_ticks=config.re_expose_ticks)
        self.priority = PriorityState(goal_skip_wait=config.goal_skip_wait)
        self.transforms: dict[int, Transform2D] = {}
        self.submissions: dict[int, list[FrontierPoint]] = {}
        self.fresh: dict[int, bool] = {}
        self.pending: dict[int, _Request] = {}
        self.matrices: dict[int, RewardMatrix] = {}
        self.filter_cycles: list[dict] = []
        self.assignment_counts: dict[int, int] = {}
        self.rounds_completed = 0

    # -- messages from agents -------------------------------------------------

    def register(self, agent: int, transform: Transform2D = Transform2D(), tick: int = 0) -> None:
        self.transforms[agent] = transform
        self.submissions[agent] = []
        self.fresh[agent] = False
        self.assignment_counts[agent] = 0
        self.priority.register(agent)
        self.log.emit(tick, agent, "register")

    def _check(self, agent: int) -> None:
        if agent not in self.transforms:
            raise UnknownAgent(agent)

    def submit_frontiers(self, agent: int, points: Iterable, tick: int = 0) -> int:
        """Store the agent's latest frontier list (agent frame), replacing the previous one."""
        self._check(agent)
        T = self.transforms[agent]
        out = []
        for p in points:
            xy = p.position if isinstance(p, FrontierPoint) else p
            x, y = T.apply(xy)
            out.append(FrontierPoint(x, y, source_agent=agent))
        self.submissions[agent] = out
        self.fresh[agent] = True
        self.log.emit(tick, agent, "submit_frontiers", count=len(out))
        return len(out)

    def request_goal(self, agent: int, pose: Pose2D, graph: PoseGraph, tick: int = 0) -> None:
        """Stage a goal request; ``pose`` is in the merged frame."""
        self._check(agent)
        if agent in self.pending:
            raise ValueError(f"agent {agent} already has an outstanding request")
        if self.ledger.active_goal(agent) is not None:
            raise ValueError(f"agent {agent} still has an active goal")
        self.pending[agent] = _Request(pose, graph.copy(), tick)
        self.log.emit(tick, agent, "request_goal")

    def report_goal_status(self, agent: int, status: str, tick: int = 0) -> None:
        self._check(agent)
        if status not in (REACHED, ABANDONED):
            raise ValueError(f"status must be {REACHED!r} or {ABANDONED!r}")
        if self.ledger.active_goal(agent) is None:
            raise NoActiveGoal(f"agent {agent} has no active goal")
        self.ledger.close(agent, status, tick)
        self.log.emit(tick, agent, "report_status", status=status)

    # -- decision point ---------------------------------------------------------

    def decide(self, tick: int, merged: OccupancyGrid) -> list[Reply]:
        if self.config.mode is ProtocolMode.SYNC:
            if not self.sync_ready(tick):
                return []
            return self.sync_round(merged, tick)
        return self.async_serve(merged, tick)

    def sync_ready(self, tick: int) -> bool:
        if not self.pending:
            return False
        if any(not self.fresh[a] for a in self.pending):
            return False
        if len(self.pending) == len(self.transforms):
            return True
        timeout = self.config.sync_timeout
        if timeout is None:
            return False
        oldest = min(r.tick for r in self.pending.values())
        return tick - oldest >= timeout

    def candidates(self, tick: int, merged: OccupancyGrid,
                   poses: Sequence[Pose2D] = ()) -> list[FrontierPoint]:
        """Merged frontier list, filtered for the proposed strategy, with the cycle logged.

        For the proposed strategy, points the ledger would refuse or that none of
        ``poses`` can reach are dropped before filtering so they cannot satisfy
        ``min_pts`` on their own.
        """
        raw = merge_points(self.submissions, self.config.eps_pt)
        fp = self._cycle_params()
        if self.config.strategy is StrategyKind.OURS:
            open_pts = [f for f in raw if not self.ledger.blocks(f.position, tick)]
            if poses:
                open_pts = self._reachable(open_pts, merged, poses)
            kept, fp = adaptive_filter(open_pts, merged, fp)
            self.filter_params = fp
        else:
            kept = raw
        self.filter_cycles.append({"tick": tick, "count_before": len(raw), "count_after": len(kept),
                                   "rad": fp.rad, "per_unk": fp.per_unk})
        return kept

    def _cycle_params(self) -> FilterParams:
        mode, base = self.config.persist_filter, self.config.filter_params
        if mode == "all":
            return self.filter_params
        if mode == "per_unk":
            return replace(base, per_unk=self.filter_params.per_unk)
        return base

    def _reachable(self, points, merged, poses):
        reach = np.zeros(merged.shape, dtype=bool)
        for pose in poses:
            try:
                reach |= np.isfinite(distance_field(merged, pose.xy, self.config.planner))
            except StartInObstacle:
                continue
        out = []
        for f in points:
            if merged.contains(f.x, f.y) and reach[merged.world_to_cell(f.x, f.y)]:
                out.append(f)
        return out

    def _matrix_for(self, agent: int, req: _Request, cands: Sequence[FrontierPoint],
                    merged: OccupancyGrid) -> RewardMatrix:
        cfg = self.config
        return build_reward_matrix(agent, req.pose, cands, merged, req.graph, self.filter_params,
                                   cfg.weights, cfg.planner, cfg.eps_pt)

    def _assign(self, agent: int, goal: FrontierPoint, tick: int, **info) -> Reply:
        # caller has already written the goal into the ledger
        self.assignment_counts[agent] += 1
        self.fresh[agent] = False
        self.log.emit(tick, agent, "goal_assignment", x=goal.x, y=goal.y,
                      targets_assigned=self.ledger.targets_assigned_count, **info)
        return Reply(agent, "goal_assignment", goal)

    def _no_candidates(self, agent: int, tick: int, **info) -> Reply:
        self.fresh[agent] = False
        self.log.emit(tick, agent, "no_candidates", **info)
        return Reply(agent, "no_candidates")

    def _select_baseline(self, agent: int, req: _Request, cands, merged, tick) -> FrontierPoint:
        cfg = self.config
        if cfg.strategy is StrategyKind.FRONTIER_GREEDY:
            return greedy_select(req.pose, cands, self.ledger, merged, cfg.planner, tick)
        return mags_select(req.pose, cands, merged, req.graph, self.filter_params, cfg.weights, cfg.planner)

    def sync_round(self, merged: OccupancyGrid, tick: int) -> list[Reply]:
        """Serve every waiting agent once, lowest id first."""
        if not self.pending:
            return []
        stale = [a for a in self.pending if not self.fresh[a]]
        if stale:
            raise RoundIncomplete(f"agents {sorted(stale)} have not submitted frontiers")
        missing = sorted(set(self.transforms) - set(self.pending))
        if missing:
            self.log.emit(tick, None, "sync_timeout", skipped=missing)
        order = sorted(self.pending)
        reqs = {a: self.pending.pop(a) for a in order}
        cands = self.candidates(tick, merged, [reqs[a].pose for a in order])
        replies = []
        if self.config.strategy is StrategyKind.OURS:
            mats = {a: self._matrix_for(a, reqs[a], cands, merged) for a in order}
            for a in order:
                m = mats[a]
                pre = m.max_reward()
                try:
                    goal = select_goal(m, self.ledger, tick)
                except NoCandidates:
                    replies.append(self._no_candidates(a, tick))
                    continue
                self.ledger.record(a, goal.position, tick)
                ks = spread_update(mats, goal.position, self.ledger, assigning_agent=a, d_min=self.config.d_min)
                replies.append(self._assign(a, goal, tick, pre_max=_round(pre), post_max=_round(m.max_reward()),
                                            K={str(k): _round(v) for k, v in ks.items()}))
            self.matrices.update(mats)
        else:
            for a in order:
                try:
                    goal = self._select_baseline(a, reqs[a], cands, merged, tick)
                except NoCandidates:
                    replies.append(self._no_candidates(a, tick))
                    continue
                self.ledger.record(a, goal.position, tick)
                replies.append(self._assign(a, goal, tick))
        self.rounds_completed += 1
        return replies

    def async_serve(self, merged: OccupancyGrid, tick: int) -> list[Reply]:
        """Serve up to ``requests_per_tick`` pending requests by priority."""
        replies = []
        for _ in range(self.config.requests_per_tick):
            if not self.pending:
                break
            waiting = sorted(self.pending)
            winner = self.priority.pick_winner(waiting)
            skipped = self.priority.skip_counters[winner]
            self.priority.record_decision(winner, waiting)
            req = self.pending.pop(winner)
            replies.append(self._serve_one(winner, req, merged, tick, skipped))
        return replies

    def _serve_one(self, agent: int, req: _Request, merged: OccupancyGrid, tick: int, skipped: int) -> Reply:
        cands = self.candidates(tick, merged, [req.pose])
        if self.config.strategy is not StrategyKind.OURS:
            try:
                goal = self._select_baseline(agent, req, cands, merged, tick)
            except NoCandidates:
                return self._no_candidates(agent, tick, skip_counter=skipped)
            self.ledger.record(agent, goal.position, tick)
            return self._assign(agent, goal, tick, skip_counter=skipped)
        m = self._matrix_for(agent, req, cands, merged)
        # Goals already held by others push this fresh matrix away from them.
        for rec in self.ledger.active_goals():
            if rec.agent != agent:
                apply_spread(m, rec.position, self.ledger.targets_assigned_count,
                             self.config.eps_pt, self.config.d_min)
        pre = m.max_reward()
        self.matrices[agent] = m
        try:
            goal = select_goal(m, self.ledger, tick)
        except NoCandidates:
            return self._no_candidates(agent, tick, skip_counter=skipped)
        self.ledger.record(agent, goal.position, tick)
        ks = spread_update(self.matrices, goal.position, self.ledger, assigning_agent=agent,
                           d_min=self.config.d_min)
        return self._assign(agent, goal, tick, skip_counter=skipped, pre_max=_round(pre),
                            post_max=_round(m.max_reward()), K={str(k): _round(v) for k, v in ks.items()})


# -- protocol conformance ----------------------------------------------------------


class ProtocolViolation(Exception):
    pass


class ProtocolAcceptor:
    """Replays an event log against the per-agent protocol state machine.

    States: idle -> requested (request_goal) -> active (goal_assignment) ->
    idle (report_status); a no_candidates reply returns requested -> idle.
    """

    def __init__(self, goal_skip_wait: int | None = None):
        self.goal_skip_wait = goal_skip_wait
        self.state: dict[int, str] = {}

    def feed(self, rec: Mapping) -> None:
        agent, ev = rec.get("agent"), rec["event"]
        if ev == "register":
            if agent in self.state:
                raise ProtocolViolation(f"agent {agent} registered twice")
            self.state[agent] = "idle"
            return
        if ev not in ("submit_frontiers", "request_goal", "goal_assignment", "no_candidates", "report_status"):
            return
        if agent not in self.state:
            raise ProtocolViolation(f"{ev} from unregistered agent {agent}")
        st = self.state[agent]
        if ev == "submit_frontiers":
            if st == "active":
                raise ProtocolViolation(f"agent {agent} submitted while navigating")
        elif ev == "request_goal":
            if st != "idle":
                raise ProtocolViolation(f"agent {agent} requested in state {st}")
            self.state[agent] = "requested"
        elif ev in ("goal_assignment", "no_candidates"):
            if st != "requested":
                raise ProtocolViolation(f"{ev} for agent {agent} without a request")
            sk = rec.get("payload", {}).get("skip_counter")
            if self.goal_skip_wait is not None and sk is not None and sk > self.goal_skip_wait:
                raise ProtocolViolation(f"agent {agent} served after {sk} skips")
            self.state[agent] = "active" if ev == "goal_assignment" else "idle"
        elif ev == "report_status":
            if st != "active":
                raise ProtocolViolation(f"agent {agent} reported status without an active goal")
            self.state[agent] = "idle"

    def check(self, records: Iterable[Mapping]) -> None:
        for rec in records:
            self.feed(rec)
