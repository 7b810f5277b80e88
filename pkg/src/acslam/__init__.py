"""Deterministic multi-robot exploration simulator for centralized active collaborative SLAM.

Agents map a ground-truth occupancy grid with a range sensor, submit frontier
points to a central coordinator, and receive goals chosen by one of three
strategies: the proposed filtered-frontier / spanning-tree reward / spread
policy ("ours"), a greedy nearest-frontier baseline, and a reward-only
multi-agent baseline ("mags").
"""

from .baselines import StrategyKind, greedy_select, mags_select
from .coordinator import Coordinator, CoordinatorConfig, EventLog, ProtocolAcceptor, ProtocolMode
from .errors import (ACSlamError, DimensionMismatch, DisconnectedGraph, NoActiveGoal, NoCandidates,
                     NoPath, OutOfBounds, PoseInObstacle, RoundIncomplete, ScenarioInvalid,
                     StartInObstacle, TooLarge, UnknownAgent, Unreachable)
from .frontier import (FilterParams, FrontierPoint, adaptive_filter, detect_frontiers, filter_points,
                       unknown_percentage)
from .gridworld import (FREE, OCCUPIED, UNKNOWN, CellState, OccupancyGrid, Pose2D, SensorParams,
                        Transform2D, coverage_percent, integrate_scan, map_quality, merge_maps,
                        raycast_scan, read_pgm, transform_point, write_pgm)
from .harness import Scenario, compare, load_scenario, run, summarize
from .planning import PlannerParams, plan, plan_path
from .reward import (RewardMatrix, RewardRow, RewardWeights, build_reward_matrix, compute_reward,
                     select_goal, spread_update)
from .uncertainty import PoseGraph, brute_force_spanning_trees, log_spanning_tree_weight

__version__ = "0.1.0"
