"""Line-delimited JSON front end for :class:`Coordinator` over TCP.

Requests (one JSON object per line, ``type`` selects the operation)::

    {"type": "register", "agent": 0, "transform": [theta, tx, ty]}
    {"type": "submit_frontiers", "agent": 0, "points": [[x, y], ...]}
    {"type": "update_map", "agent": 0, "cells": [[...]], "resolution": 0.25, "origin": [x0, y0]}
    {"type": "request_goal", "agent": 0, "pose": [x, y, theta],
     "graph": {"nodes": [[x, y, theta], ...], "edges": [[i, j, w], ...]}}
    {"type": "report_status", "agent": 0, "status": "reached"}

Replies: ``goal_assignment`` with ``x``/``y``, ``no_candidates``, ``ack`` or
``error`` with a ``message``.  Under the synchronous protocol a
``request_goal`` blocks until the round that serves it has run.

Agent maps sent with ``update_map`` are in the agent frame and get merged with
the registered transforms; without any, ``base_map`` is what the server scores
against.
"""

from __future__ import annotations

import json
import socketserver
import threading
from typing import Any

import numpy as np

from .coordinator import Coordinator, CoordinatorConfig, EventLog, ProtocolMode
from .errors import ACSlamError
from .gridworld import OccupancyGrid, Pose2D, Transform2D, merge_maps
from .uncertainty import PoseGraph


class CoordinatorService:
    """Thread-safe message dispatcher; independent of the transport."""

    def __init__(self, config: CoordinatorConfig, base_map: OccupancyGrid, log: EventLog | None = None):
        self.coord = Coordinator(config, log)
        self.base_map = base_map
        self.local_maps: dict[int, OccupancyGrid] = {}
        self.tick = 0
        self._replies: dict[int, dict] = {}
        self._cv = threading.Condition()

    def merged(self) -> OccupancyGrid:
        if not self.local_maps:
            return self.base_map
        ids = sorted(self.local_maps)
        return merge_maps([self.local_maps[i] for i in ids], [self.coord.transforms[i] for i in ids])

    def handle(self, msg: Any, timeout: float | None = None) -> dict:
        try:
            if not isinstance(msg, dict) or "type" not in msg:
                raise ValueError("message must be an object with a 'type' field")
            kind = msg["type"]
            fn = getattr(self, f"_on_{kind}", None)
            if fn is None:
                raise ValueError(f"unknown message type {kind!r}")
            if "agent" not in msg:
                raise ValueError("missing 'agent'")
            return fn(int(msg["agent"]), msg, timeout)
        except (ACSlamError, ValueError, TypeError, KeyError, TimeoutError) as exc:
            return {"type": "error", "message": str(exc) or type(exc).__name__}

    # -- handlers ----------------------------------------------------------------

    def _on_register(self, agent, msg, timeout):
        theta, tx, ty = msg.get("transform", (0.0, 0.0, 0.0))
        with self._cv:
            if agent in self.coord.transforms:
                raise ValueError(f"agent {agent} already registered")
            self.coord.register(agent, Transform2D(float(theta), (float(tx), float(ty))), self.tick)
        return {"type": "ack"}

    def _on_submit_frontiers(self, agent, msg, timeout):
        pts = [(float(x), float(y)) for x, y in msg.get("points", [])]
        with self._cv:
            n = self.coord.submit_frontiers(agent, pts, self.tick)
            self._cv.notify_all()
        return {"type": "ack", "count": n}

    def _on_update_map(self, agent, msg, timeout):
        cells = np.asarray(msg["cells"], dtype=np.int8)
        grid = OccupancyGrid(cells, float(msg["resolution"]), tuple(map(float, msg.get("origin", (0, 0)))))
        with self._cv:
            if agent not in self.coord.transforms:
                raise KeyError(f"agent {agent} is not registered")
            self.local_maps[agent] = grid
        return {"type": "ack"}

    def _on_report_status(self, agent, msg, timeout):
        with self._cv:
            self.coord.report_goal_status(agent, str(msg["status"]), self.tick)
            self.tick += 1
        return {"type": "ack"}

    def _on_request_goal(self, agent, msg, timeout):
        x, y, theta = (float(v) for v in msg["pose"])
        pose = Pose2D(x, y, theta)
        graph = _graph_from(msg.get("graph"), pose)
        with self._cv:
            self.coord.request_goal(agent, pose, graph, self.tick)
            self._drain()
            if not self._cv.wait_for(lambda: agent in self._replies, timeout):
                raise TimeoutError("round did not complete")
            return self._replies.pop(agent)

    def _drain(self) -> None:
        # caller holds the lock
        merged = self.merged()
        while self.coord.pending:
            if self.coord.config.mode is ProtocolMode.SYNC and not self.coord.sync_ready(self.tick):
                break
            replies = self.coord.decide(self.tick, merged)
            self.tick += 1
            if not replies:
                break
            for r in replies:
                if r.kind == "goal_assignment":
                    self._replies[r.agent] = {"type": "goal_assignment", "x": r.goal.x, "y": r.goal.y}
                else:
                    self._replies[r.agent] = {"type": "no_candidates"}
        self._cv.notify_all()


def _graph_from(data, pose: Pose2D) -> PoseGraph:
    if not data:
        return PoseGraph.from_spawn(pose)
    g = PoseGraph([Pose2D(*map(float, n)) for n in data["nodes"]])
    for i, j, w in data.get("edges", []):
        g.add_edge(int(i), int(j), float(w))
    return g


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        service: CoordinatorService = self.server.service
        for raw in self.rfile:
            line = raw.strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
            except json.JSONDecodeError as exc:
                reply = {"type": "error", "message": f"bad json: {exc.msg}"}
            else:
                reply = service.handle(msg, self.server.round_timeout)
            self.wfile.write((json.dumps(reply, sort_keys=True) + "\n").encode())
            self.wfile.flush()


class CoordinatorServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, service: CoordinatorService, round_timeout: float | None = None):
        super().__init__(address, _Handler)
        self.service = service
        self.round_timeout = round_timeout


def serve(service: CoordinatorService, host: str = "127.0.0.1", port: int = 0,
          round_timeout: float | None = None) -> CoordinatorServer:
    """Start serving on a background thread and return the server (``server_address`` holds the port)."""
    srv = CoordinatorServer((host, port), service, round_timeout)
    threading.Thread(target=srv.serve_forever, daemon=True).start()
    return srv
