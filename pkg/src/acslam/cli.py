"""Command line entry point: ``acslam run | summarize | compare | serve``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .coordinator import ProtocolMode
from .errors import ACSlamError
from .gridworld import OccupancyGrid
from .harness import (RunRecord, compare, format_summary, load_scenario, run, summarize,
                      write_summary)

log = logging.getLogger("acslam")


def parse_seeds(text: str) -> list[int]:
    """``"0-9"``, ``"1,4,7"`` or a mix such as ``"0-2,5"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError(f"no seeds in {text!r}")
    return seeds


def _scenario(args):
    sc = load_scenario(args.scenario)
    return sc.with_overrides(strategy=getattr(args, "strategy", None),
                             protocol=getattr(args, "protocol", None),
                             seed=getattr(args, "seed", None),
                             tick_limit=args.ticks)


def cmd_run(args) -> int:
    sc = _scenario(args)
    t0 = time.perf_counter()
    result = run(sc, args.out)
    info = result.summary()
    log.info("run finished in %.1f s", time.perf_counter() - t0)
    print(f"{info['strategy']}:{info['protocol']} seed {info['seed']}: coverage {info['final_coverage']:.2f} % "
          f"after {info['ticks']} ticks, {info['assignments']} goals, "
          f"frontier points raw {info['mean_raw']:.1f} / filtered {info['mean_filtered']:.1f}")
    print(f"written to {args.out}")
    return 0


def _run_dirs(paths) -> list[Path]:
    out = []
    for p in map(Path, paths):
        if (p / "run.json").exists():
            out.append(p)
        else:
            out.extend(sorted(q.parent for q in p.rglob("run.json")))
    return out


def cmd_summarize(args) -> int:
    dirs = _run_dirs(args.runs)
    if not dirs:
        print("no run directories found", file=sys.stderr)
        return 2
    summ = summarize([RunRecord.from_dir(d) for d in dirs])
    text = format_summary(summ)
    print(text, end="")
    if args.out:
        write_summary(summ, args.out)
    return 0


def cmd_compare(args) -> int:
    template = _scenario(args)
    cmp = compare(args.strategies, template, args.seeds, args.out)
    print("variant            mean final    std")
    for r in cmp.rows:
        print(f"{r['variant']:<18} {r['mean_final']:10.2f} {r['std_final']:6.2f}")
    if args.out:
        print(f"details in {Path(args.out) / 'compare.txt'}")
    return 0


def cmd_serve(args) -> int:
    from .server import CoordinatorService, serve

    sc = _scenario(args)
    truth = sc.load_map()
    blank = OccupancyGrid.filled(truth.width, truth.height, truth.resolution, truth.origin)
    service = CoordinatorService(sc.coordinator_config(), blank)
    srv = serve(service, args.host, args.port)
    host, port = srv.server_address[:2]
    print(json.dumps({"listening": f"{host}:{port}", "protocol": sc.protocol.value,
                      "strategy": sc.strategy.value}), flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        srv.shutdown()
        if args.events:
            service.coord.log.write(args.events)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="acslam", description="Multi-robot active collaborative SLAM exploration simulator")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_flags(sp, with_strategy=True):
        sp.add_argument("--scenario", "-s", default="builtin:office",
                        help="scenario YAML path or builtin:office / builtin:ward")
        sp.add_argument("--ticks", type=int, help="override the scenario tick limit")
        if with_strategy:
            sp.add_argument("--strategy", choices=["ours", "mags", "frontier"])
        sp.add_argument("--protocol", choices=[m.value for m in ProtocolMode])

    r = sub.add_parser("run", help="simulate one mission and write its outputs")
    scenario_flags(r)
    r.add_argument("--seed", type=int)
    r.add_argument("--out", "-o", required=True, help="output directory")
    r.set_defaults(fn=cmd_run)

    s = sub.add_parser("summarize", help="aggregate run directories")
    s.add_argument("runs", nargs="+", help="run directories (searched recursively)")
    s.add_argument("--out", "-o", help="write summary.csv / curves.csv / summary.txt here")
    s.set_defaults(fn=cmd_summarize)

    c = sub.add_parser("compare", help="run several strategies over the same seeds")
    scenario_flags(c, with_strategy=False)
    c.add_argument("--strategies", nargs="+", default=["ours", "frontier", "mags"],
                   help="variants such as ours, mags, frontier, ours:sync")
    c.add_argument("--seeds", type=parse_seeds, default=list(range(10)), help="e.g. 0-9 or 1,3,5")
    c.add_argument("--out", "-o", help="output directory")
    c.set_defaults(fn=cmd_compare)

    v = sub.add_parser("serve", help="run the coordinator behind a line-delimited JSON socket")
    scenario_flags(v)
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=7788)
    v.add_argument("--events", help="write the event log here on shutdown")
    v.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ACSlamError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
