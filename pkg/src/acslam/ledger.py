"""Coordinator bookkeeping: assigned goals and request priorities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import NoActiveGoal

ACTIVE = "active"
REACHED = "reached"
ABANDONED = "abandoned"


@dataclass
class GoalRecord:
    agent: int
    x: float
    y: float
    tick: int
    status: str = ACTIVE
    closed_tick: int | None = None

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass
class GoalLedger:
    """Every goal ever assigned this mission, in assignment order."""

    eps_pt: float = 0.3
    re_expose_ticks: int = 20
    records: list[GoalRecord] = field(default_factory=list)

    @property
    def targets_assigned_count(self) -> int:
        return len(self.records)

    def active_goal(self, agent: int) -> GoalRecord | None:
        for rec in reversed(self.records):
            if rec.agent == agent and rec.status == ACTIVE:
                return rec
        return None

    def active_goals(self) -> list[GoalRecord]:
        return [r for r in self.records if r.status == ACTIVE]

    def record(self, agent: int, point: tuple[float, float], tick: int) -> GoalRecord:
        if self.active_goal(agent) is not None:
            raise ValueError(f"agent {agent} already has an active goal")
        rec = GoalRecord(agent, float(point[0]), float(point[1]), tick)
        self.records.append(rec)
        return rec

    def close(self, agent: int, status: str, tick: int) -> GoalRecord:
        if status not in (REACHED, ABANDONED):
            raise ValueError(f"unknown goal status {status!r}")
        rec = self.active_goal(agent)
        if rec is None:
            raise NoActiveGoal(f"agent {agent} has no active goal")
        rec.status = status
        rec.closed_tick = tick
        return rec

    def blocks(self, point: tuple[float, float], tick: int) -> bool:
        """True if ``point`` may not be handed out again at ``tick``.

        Active and reached goals block forever; abandoned ones until
        ``re_expose_ticks`` have passed.
        """
        for rec in self.records:
            if math.dist(rec.position, point) > self.eps_pt:
                continue
            if rec.status != ABANDONED:
                return True
            if tick < rec.closed_tick + self.re_expose_ticks:
                return True
        return False


@dataclass
class PriorityState:
    """Base priority is the agent id order; skip counters track starvation."""

    goal_skip_wait: int = 3
    skip_counters: dict[int, int] = field(default_factory=dict)

    def register(self, agent: int) -> None:
        self.skip_counters.setdefault(agent, 0)

    def pick_winner(self, pending: list[int]) -> int:
        """Choose which pending request the server handles next.

        An agent is promoted once its counter reaches ``goal_skip_wait`` minus
        the number of other pending requests, so that even when several agents
        starve together each is served with a counter of at most
        ``goal_skip_wait``.  Promoted agents go oldest-starved first; otherwise
        the lowest agent id wins.
        """
        if not pending:
            raise ValueError("no pending requests")
        threshold = self.goal_skip_wait - (len(pending) - 1)
        starved = [a for a in pending if self.skip_counters[a] >= threshold and self.skip_counters[a] > 0]
        if starved:
            return min(starved, key=lambda a: (-self.skip_counters[a], a))
        return min(pending)

    def record_decision(self, winner: int, pending: list[int]) -> None:
        for a in pending:
            if a != winner:
                self.skip_counters[a] += 1
        self.skip_counters[winner] = 0
