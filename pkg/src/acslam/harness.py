"""Scenario loading, the tick loop, run outputs, and multi-run summaries."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

from .agent import Agent, AgentParams, ReportStatus, RequestGoal, SubmitFrontiers
from .baselines import StrategyKind
from .coordinator import Coordinator, CoordinatorConfig, EventLog, ProtocolMode, persist_mode
from .errors import ScenarioInvalid
from .frontier import FilterParams
from .gridworld import (FREE, OccupancyGrid, Pose2D, SensorParams, coverage_percent, map_quality,
                        merge_maps, reachable_mask, read_pgm, write_pgm)
from .maps import load_builtin
from .planning import PlannerParams, inflate
from .reward import RewardWeights

METRICS_HEADER = ["tick", "coverage", "raw_count", "filtered_count", "rad", "per_unk", "assignments"]
POSES_HEADER = ["tick", "agent", "x", "y", "theta"]
FILTER_HEADER = ["tick", "count_before", "count_after", "rad", "per_unk"]


@dataclass
class Scenario:
    map: str
    agents: list[Pose2D]
    name: str = "scenario"
    protocol: ProtocolMode = ProtocolMode.ASYNC
    strategy: StrategyKind = StrategyKind.OURS
    agent_params: AgentParams = AgentParams()
    filter_params: FilterParams = FilterParams()
    weights: RewardWeights = RewardWeights()
    planner: PlannerParams = PlannerParams()
    goal_skip_wait: int = 3
    eps_pt: float = 0.3
    re_expose_ticks: int = 20
    requests_per_tick: int = 1
    sync_timeout: int | None = None
    persist_filter: str = "all"
    tick_limit: int = 300
    stop_coverage: float = 100.0
    spawn_jitter: float = 0.0
    seed: int = 0
    base_dir: Path | None = None

    def with_overrides(self, **kw) -> "Scenario":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "protocol" in kw:
            kw["protocol"] = ProtocolMode.parse(kw["protocol"])
        if "strategy" in kw:
            kw["strategy"] = StrategyKind.parse(kw["strategy"])
        return replace(self, **kw)

    def coordinator_config(self) -> CoordinatorConfig:
        return CoordinatorConfig(
            mode=self.protocol, strategy=self.strategy, filter_params=self.filter_params,
            weights=self.weights, planner=self.planner, goal_skip_wait=self.goal_skip_wait,
            eps_pt=self.eps_pt, re_expose_ticks=self.re_expose_ticks,
            requests_per_tick=self.requests_per_tick, sync_timeout=self.sync_timeout,
            persist_filter=self.persist_filter)

    def load_map(self) -> OccupancyGrid:
        if self.map.startswith("builtin:"):
            return load_builtin(self.map.split(":", 1)[1])
        path = Path(self.map)
        if not path.is_absolute() and self.base_dir is not None:
            path = self.base_dir / path
        if not path.exists():
            raise ScenarioInvalid(f"map file {path} not found")
        return read_pgm(path)


def _build(cls, section: dict | None, where: str):
    try:
        return cls(**(section or {}))
    except (TypeError, ValueError) as exc:
        raise ScenarioInvalid(f"{where}: {exc}") from exc


def scenario_from_dict(data: dict, base_dir: Path | None = None) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioInvalid("scenario must be a mapping")
    if "map" not in data:
        raise ScenarioInvalid("scenario needs a 'map' entry")
    agents = data.get("agents") or []
    if not agents:
        raise ScenarioInvalid("scenario needs at least one agent")
    spawns = []
    for k, a in enumerate(agents):
        sp = a.get("spawn") if isinstance(a, dict) else None
        if not sp or len(sp) < 2:
            raise ScenarioInvalid(f"agent {k}: spawn must be [x, y] or [x, y, theta]")
        spawns.append(Pose2D(float(sp[0]), float(sp[1]), float(sp[2]) if len(sp) > 2 else 0.0))
    ad = dict(data.get("agent_defaults") or {})
    sensor = _build(SensorParams, ad.pop("sensor", None), "agent_defaults.sensor")
    planner = _build(PlannerParams, data.get("planner"), "planner")
    fp = _build(FilterParams, data.get("filter"), "filter")
    ad.setdefault("goal_tol", 0.5 * fp.rad)
    agent_params = _build(AgentParams, dict(ad, sensor=sensor, planner=planner), "agent_defaults")
    coord = dict(data.get("coordinator") or {})
    try:
        sc = Scenario(
            map=str(data["map"]), agents=spawns, name=str(data.get("name", "scenario")),
            protocol=ProtocolMode.parse(data.get("protocol", "async")),
            strategy=StrategyKind.parse(data.get("strategy", "ours")),
            agent_params=agent_params, filter_params=fp,
            weights=_build(RewardWeights, data.get("reward"), "reward"), planner=planner,
            goal_skip_wait=int(coord.pop("goal_skip_wait", 3)), eps_pt=float(coord.pop("eps_pt", 0.3)),
            re_expose_ticks=int(coord.pop("re_expose_ticks", 20)),
            requests_per_tick=int(coord.pop("requests_per_tick", 1)),
            sync_timeout=coord.pop("sync_timeout", None),
            persist_filter=persist_mode(coord.pop("persist_filter", "all")),
            tick_limit=int(data.get("tick_limit", 300)),
            stop_coverage=float(data.get("stop_coverage", 100.0)),
            spawn_jitter=float(data.get("spawn_jitter", 0.0)),
            seed=int(data.get("seed", 0)), base_dir=base_dir)
    except ValueError as exc:
        raise ScenarioInvalid(str(exc)) from exc
    if coord:
        raise ScenarioInvalid(f"unknown coordinator keys: {sorted(coord)}")
    validate(sc)
    return sc


def validate(sc: Scenario) -> None:
    if sc.tick_limit < 0:
        raise ScenarioInvalid("tick_limit must be >= 0")
    if sc.goal_skip_wait < 0:
        raise ScenarioInvalid("goal_skip_wait must be >= 0")
    if sc.requests_per_tick < 1:
        raise ScenarioInvalid("requests_per_tick must be >= 1")
    if sc.protocol is ProtocolMode.ASYNC and sc.goal_skip_wait < len(sc.agents) - 1:
        raise ScenarioInvalid("goal_skip_wait below (agents - 1) cannot bound starvation")


def load_scenario(path: str | Path) -> Scenario:
    """Read a YAML scenario; ``builtin:NAME`` also resolves bundled scenarios."""
    spath = str(path)
    if spath.startswith("builtin:"):
        res = resources.files("acslam") / "scenarios" / f"{spath.split(':', 1)[1]}.yaml"
        return scenario_from_dict(yaml.safe_load(res.read_text()), None)
    p = Path(path)
    if not p.exists():
        raise ScenarioInvalid(f"scenario file {p} not found")
    try:
        data = yaml.safe_load(p.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioInvalid(f"{p}: {exc}") from exc
    return scenario_from_dict(data, p.parent)


def spawn_poses(sc: Scenario, truth: OccupancyGrid) -> list[Pose2D]:
    """Base spawns jittered by the scenario seed; every pose lands in a clear free cell."""
    rng = np.random.default_rng(sc.seed)
    clear = (truth.cells == FREE) & ~inflate(truth, sc.planner.inflation)
    poses = []
    for base in sc.agents:
        if not truth.contains(base.x, base.y) or truth.state_at(base.x, base.y) != FREE:
            raise ScenarioInvalid(f"spawn ({base.x}, {base.y}) is not in a free cell")
        chosen = base
        if sc.spawn_jitter > 0:
            for _ in range(100):
                dx, dy = rng.uniform(-sc.spawn_jitter, sc.spawn_jitter, size=2)
                x, y = base.x + float(dx), base.y + float(dy)
                if truth.contains(x, y) and clear[truth.world_to_cell(x, y)]:
                    chosen = Pose2D(x, y, base.theta)
                    break
        poses.append(chosen)
    return poses


@dataclass
class RunResult:
    scenario: Scenario
    metrics: list[dict]
    poses: list[dict]
    filter_cycles: list[dict]
    events: EventLog
    merged: OccupancyGrid
    local_maps: list[OccupancyGrid]
    truth: OccupancyGrid
    agents: list[Agent]
    coordinator: Coordinator
    quality: tuple[float, float]
    unknown_quality: tuple[float, float]

    @property
    def final_coverage(self) -> float:
        return self.metrics[-1]["coverage"] if self.metrics else 0.0

    def summary(self) -> dict:
        raw = [c["count_before"] for c in self.filter_cycles]
        kept = [c["count_after"] for c in self.filter_cycles]
        return {
            "name": self.scenario.name,
            "strategy": self.scenario.strategy.value,
            "protocol": self.scenario.protocol.value,
            "seed": self.scenario.seed,
            "agents": len(self.agents),
            "ticks": self.metrics[-1]["tick"] if self.metrics else 0,
            "final_coverage": self.final_coverage,
            "assignments": self.coordinator.ledger.targets_assigned_count,
            "filter_cycles": len(self.filter_cycles),
            "mean_raw": statistics.fmean(raw) if raw else 0.0,
            "mean_filtered": statistics.fmean(kept) if kept else 0.0,
            "rmse": self.quality[0],
            "ssim": self.quality[1],
            "rmse_unknown": self.unknown_quality[0],
            "ssim_unknown": self.unknown_quality[1],
        }


def run(sc: Scenario, out_dir: str | Path | None = None) -> RunResult:
    """Simulate one mission; writes all outputs when ``out_dir`` is given."""
    validate(sc)
    truth = sc.load_map()
    spawns = spawn_poses(sc, truth)
    log = EventLog()
    coord = Coordinator(sc.coordinator_config(), log)
    agents = [Agent.spawn(i, p, truth, sc.agent_params) for i, p in enumerate(spawns)]
    for a in agents:
        coord.register(a.id, a.transform, tick=0)
    by_id = {a.id: a for a in agents}
    transforms = [a.transform for a in agents]
    reachable = reachable_mask(truth, [p.xy for p in spawns])
    metrics, poses = [], []
    merged = truth
    for tick in range(sc.tick_limit + 1):
        for a in agents:
            for act in a.tick(truth):
                if isinstance(act, SubmitFrontiers):
                    coord.submit_frontiers(a.id, act.points, tick)
                elif isinstance(act, RequestGoal):
                    coord.request_goal(a.id, a.world_pose, a.pose_graph, tick)
                elif isinstance(act, ReportStatus):
                    coord.report_goal_status(a.id, act.status, tick)
        merged = merge_maps([a.local_map for a in agents], transforms)
        for reply in coord.decide(tick, merged):
            if reply.kind == "goal_assignment":
                by_id[reply.agent].receive_goal(reply.goal.position)
            else:
                by_id[reply.agent].receive_no_candidates()
        cov = coverage_percent(merged, truth, reachable)
        last = coord.filter_cycles[-1] if coord.filter_cycles else None
        metrics.append({
            "tick": tick, "coverage": cov,
            "raw_count": last["count_before"] if last else 0,
            "filtered_count": last["count_after"] if last else 0,
            "rad": coord.filter_params.rad, "per_unk": coord.filter_params.per_unk,
            "assignments": coord.ledger.targets_assigned_count,
        })
        for a in agents:
            wp = a.world_pose
            poses.append({"tick": tick, "agent": a.id, "x": wp.x, "y": wp.y, "theta": wp.theta})
        if cov >= sc.stop_coverage:
            break
    blank = OccupancyGrid.filled(truth.width, truth.height, truth.resolution, truth.origin)
    result = RunResult(sc, metrics, poses, coord.filter_cycles, log, merged,
                       [a.local_map for a in agents], truth, agents, coord,
                       map_quality(merged, truth), map_quality(blank, truth))
    if out_dir is not None:
        write_outputs(result, out_dir)
    return result


def _fmt(v: Any) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[dict]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(r[h]) for h in header])
    path.write_text(buf.getvalue())


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def write_outputs(result: RunResult, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "metrics.csv", METRICS_HEADER, result.metrics)
    write_csv(out / "poses.csv", POSES_HEADER, result.poses)
    write_csv(out / "filter_cycles.csv", FILTER_HEADER, result.filter_cycles)
    result.events.write(out / "events.jsonl")
    write_pgm(result.merged, out / "merged.pgm")
    for a in result.agents:
        write_pgm(a.local_map, out / f"local_{a.id}.pgm")
        a.pose_graph.save(out / f"pose_graph_{a.id}.txt")
    (out / "run.json").write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    return out


# -- aggregation ---------------------------------------------------------------------


@dataclass
class RunRecord:
    """What :func:`summarize` needs from one run, in memory or loaded from disk."""

    info: dict
    metrics: list[dict]
    filter_cycles: list[dict]

    @classmethod
    def from_result(cls, r: RunResult) -> "RunRecord":
        return cls(r.summary(), r.metrics, r.filter_cycles)

    @classmethod
    def from_dir(cls, d: str | Path) -> "RunRecord":
        d = Path(d)
        return cls(json.loads((d / "run.json").read_text()), read_csv(d / "metrics.csv"),
                   read_csv(d / "filter_cycles.csv"))

    @property
    def group(self) -> str:
        return f"{self.info['strategy']}:{self.info['protocol']}"


def _mean_std(xs: Sequence[float]) -> tuple[float, float]:
    if not xs:
        return 0.0, 0.0
    return statistics.fmean(xs), (statistics.pstdev(xs) if len(xs) > 1 else 0.0)


def _usage(values: Sequence[float]) -> dict[float, float]:
    if not values:
        return {}
    counts: dict[float, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return {k: 100.0 * counts[k] / len(values) for k in sorted(counts)}


def coverage_curve(runs: Sequence[RunRecord], samples: int = 11) -> list[tuple[int, float, float]]:
    """Mean/std coverage at evenly spaced ticks; finished runs hold their last value."""
    horizon = max(int(r.metrics[-1]["tick"]) for r in runs)
    ticks = sorted({round(horizon * k / (samples - 1)) for k in range(samples)}) if horizon else [0]
    out = []
    for t in ticks:
        vals = []
        for r in runs:
            upto = [m["coverage"] for m in r.metrics if m["tick"] <= t]
            vals.append(upto[-1] if upto else 0.0)
        mu, sd = _mean_std(vals)
        out.append((int(t), mu, sd))
    return out


def summarize(runs: Sequence[RunRecord | RunResult]) -> dict[str, dict]:
    """Aggregate runs per ``strategy:protocol`` group."""
    if not runs:
        raise ValueError("summarize needs at least one run")
    recs = [RunRecord.from_result(r) if isinstance(r, RunResult) else r for r in runs]
    groups: dict[str, list[RunRecord]] = {}
    for r in recs:
        groups.setdefault(r.group, []).append(r)
    out = {}
    for g in sorted(groups):
        rs = groups[g]
        cycles = [c for r in rs for c in r.filter_cycles]
        raw = [c["count_before"] for c in cycles]
        kept = [c["count_after"] for c in cycles]
        mean_raw = statistics.fmean(raw) if raw else 0.0
        mean_kept = statistics.fmean(kept) if kept else 0.0
        reduction = 100.0 * (1.0 - mean_kept / mean_raw) if mean_raw > 0 else 0.0
        cov = _mean_std([r.metrics[-1]["coverage"] for r in rs])
        rmse = _mean_std([r.info["rmse"] for r in rs])
        ssim = _mean_std([r.info["ssim"] for r in rs])
        out[g] = {
            "runs": len(rs),
            "coverage_mean": cov[0], "coverage_std": cov[1],
            "curve": coverage_curve(rs),
            "mean_raw": mean_raw, "mean_filtered": mean_kept,
            "reduction_pct": min(100.0, max(0.0, reduction)),
            "per_unk_usage": _usage([c["per_unk"] for c in cycles]),
            "rad_usage": _usage([c["rad"] for c in cycles]),
            "rmse_mean": rmse[0], "rmse_std": rmse[1],
            "ssim_mean": ssim[0], "ssim_std": ssim[1],
        }
    return out


SUMMARY_HEADER = ["group", "runs", "coverage_mean", "coverage_std", "mean_raw", "mean_filtered",
                  "reduction_pct", "rmse_mean", "rmse_std", "ssim_mean", "ssim_std"]


def format_summary(summary: dict[str, dict]) -> str:
    lines = []
    for g, s in summary.items():
        lines.append(f"== {g}  ({s['runs']} runs)")
        lines.append(f"  final coverage   {s['coverage_mean']:6.2f} % +- {s['coverage_std']:.2f}")
        lines.append(f"  frontier points  raw {s['mean_raw']:.2f}  filtered {s['mean_filtered']:.2f}"
                     f"  reduction {s['reduction_pct']:.1f} %")
        lines.append(f"  map quality      rmse {s['rmse_mean']:.4f}  ssim {s['ssim_mean']:.4f}")
        lines.append("  PER_UNK usage    " + ", ".join(f"{k:g}%: {v:.1f}%" for k, v in s["per_unk_usage"].items()))
        lines.append("  RAD usage        " + ", ".join(f"{k:g} m: {v:.1f}%" for k, v in s["rad_usage"].items()))
        lines.append("  coverage curve   " + ", ".join(f"t{t}: {m:.1f}" for t, m, _ in s["curve"]))
    return "\n".join(lines) + "\n"


def write_summary(summary: dict[str, dict], out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "summary.csv", SUMMARY_HEADER, [dict(s, group=g) for g, s in summary.items()])
    rows = [{"group": g, "tick": t, "mean": m, "std": sd} for g, s in summary.items() for t, m, sd in s["curve"]]
    write_csv(out / "curves.csv", ["group", "tick", "mean", "std"], rows)
    (out / "summary.txt").write_text(format_summary(summary))


# -- strategy comparison ---------------------------------------------------------------


def parse_variant(variant: str, default_protocol: ProtocolMode) -> tuple[StrategyKind, ProtocolMode]:
    """``"ours"`` or ``"ours:sync"`` -> (strategy, protocol)."""
    name, _, proto = variant.partition(":")
    return StrategyKind.parse(name), ProtocolMode.parse(proto) if proto else default_protocol


@dataclass
class Comparison:
    rows: list[dict]
    deltas: dict[tuple[str, str], float]
    runs: dict[str, list[RunResult]] = field(default_factory=dict)

    def row(self, label: str) -> dict:
        return next(r for r in self.rows if r["variant"] == label)


def compare(variants: Sequence[str], template: Scenario, seeds: Sequence[int],
            out_dir: str | Path | None = None, checkpoints: Sequence[float] = (0.25, 0.5, 0.75, 1.0)) -> Comparison:
    """Run every variant over every seed on the same scenario and tabulate coverage."""
    if len(variants) < 2:
        raise ValueError("compare needs at least two strategies")
    if not seeds:
        raise ValueError("compare needs at least one seed")
    runs: dict[str, list[RunResult]] = {}
    for v in variants:
        strat, proto = parse_variant(v, template.protocol)
        label = f"{strat.value}:{proto.value}"
        if label in runs:
            continue
        runs[label] = []
        for s in seeds:
            sc = template.with_overrides(strategy=strat, protocol=proto, seed=s)
            sub = Path(out_dir) / "runs" / f"{strat.value}_{proto.value}_seed{s}" if out_dir else None
            runs[label].append(run(sc, sub))
    ticks = [int(round(template.tick_limit * c)) for c in checkpoints]
    rows = []
    for label, rs in runs.items():
        finals = [r.final_coverage for r in rs]
        row = {"variant": label, "mean_final": statistics.fmean(finals),
               "std_final": statistics.pstdev(finals) if len(finals) > 1 else 0.0}
        for t in ticks:
            vals = []
            for r in rs:
                upto = [m["coverage"] for m in r.metrics if m["tick"] <= t]
                vals.append(upto[-1] if upto else 0.0)
            row[f"t{t}"] = statistics.fmean(vals)
        rows.append(row)
    rows.sort(key=lambda r: (-r["mean_final"], r["variant"]))
    deltas = {(a["variant"], b["variant"]): a["mean_final"] - b["mean_final"] for a in rows for b in rows}
    cmp = Comparison(rows, deltas, runs)
    if out_dir is not None:
        write_comparison(cmp, out_dir, ticks)
    return cmp


def write_comparison(cmp: Comparison, out_dir: str | Path, ticks: Sequence[int]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ["variant", "mean_final", "std_final"] + [f"t{t}" for t in ticks]
    write_csv(out / "compare.csv", header, cmp.rows)
    lines = ["variant            mean final   std    " + "  ".join(f"t{t:>5}" for t in ticks)]
    for r in cmp.rows:
        lines.append(f"{r['variant']:<18} {r['mean_final']:10.2f} {r['std_final']:6.2f}    "
                     + "  ".join(f"{r[f't{t}']:6.2f}" for t in ticks))
    lines.append("")
    lines.append("pairwise deltas (row - column, percentage points)")
    labels = [r["variant"] for r in cmp.rows]
    lines.append(" " * 18 + "".join(f"{lab:>16}" for lab in labels))
    for a in labels:
        lines.append(f"{a:<18}" + "".join(f"{cmp.deltas[(a, b)]:16.2f}" for b in labels))
    (out / "compare.txt").write_text("\n".join(lines) + "\n")
    summ = summarize([RunRecord.from_result(r) for rs in cmp.runs.values() for r in rs])
    write_summary(summ, out)
