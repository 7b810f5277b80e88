import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acslam.errors import DisconnectedGraph, TooLarge
from acslam.gridworld import Pose2D
from acslam.uncertainty import (PoseGraph, add_odometry_node, brute_force_spanning_trees,
                                log_spanning_tree_weight, try_loop_closure, uncertainty_term)


def graph(n, edges):
    return PoseGraph([Pose2D(float(k), 0.0, 0.0) for k in range(n)], list(edges))


@st.composite
def connected_graphs(draw, max_nodes=8):
    n = draw(st.integers(2, max_nodes))
    weight = st.floats(0.1, 10.0)
    edges = []
    for k in range(1, n):  # random spanning tree first
        edges.append((draw(st.integers(0, k - 1)), k, draw(weight)))
    have = {(min(i, j), max(i, j)) for i, j, _ in edges}
    for i, j in itertools.combinations(range(n), 2):
        if (i, j) not in have and draw(st.booleans()):
            edges.append((i, j, draw(weight)))
    return graph(n, edges)


def test_exact_small_cases():
    triangle = graph(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])
    assert math.exp(log_spanning_tree_weight(triangle)) == pytest.approx(3.0, rel=1e-12)
    k4 = graph(4, [(i, j, 1.0) for i, j in itertools.combinations(range(4), 2)])
    assert math.exp(log_spanning_tree_weight(k4)) == pytest.approx(16.0, rel=1e-12)
    chain = graph(5, [(k, k + 1, 1.0) for k in range(4)])
    assert log_spanning_tree_weight(chain) == pytest.approx(0.0, abs=1e-12)


def test_weighted_triangle():
    # spanning trees: {a,b}, {b,c}, {a,c} -> 1*2 + 2*3 + 1*3 = 11
    g = graph(3, [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)])
    assert math.exp(log_spanning_tree_weight(g)) == pytest.approx(11.0, rel=1e-12)
    assert brute_force_spanning_trees(g) == pytest.approx(11.0)


def test_weighted_chain_is_product():
    g = graph(4, [(0, 1, 2.0), (1, 2, 0.5), (2, 3, 3.0)])
    assert log_spanning_tree_weight(g) == pytest.approx(math.log(3.0))


def test_matches_enumeration_on_200_random_graphs():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(2, 9))
        edges = [(int(rng.integers(0, k)), k, float(rng.uniform(0.1, 5))) for k in range(1, n)]
        have = {(min(i, j), max(i, j)) for i, j, _ in edges}
        for i, j in itertools.combinations(range(n), 2):
            if (i, j) not in have and rng.random() < 0.4:
                edges.append((i, j, float(rng.uniform(0.1, 5))))
        g = graph(n, edges)
        expect = brute_force_spanning_trees(g)
        assert math.exp(log_spanning_tree_weight(g)) == pytest.approx(expect, rel=1e-9)


def test_errors():
    with pytest.raises(DisconnectedGraph):
        log_spanning_tree_weight(graph(3, [(0, 1, 1.0)]))
    with pytest.raises(ValueError):
        log_spanning_tree_weight(graph(1, []))
    with pytest.raises(TooLarge):
        brute_force_spanning_trees(graph(11, [(k, k + 1, 1.0) for k in range(10)]))
    with pytest.raises(ValueError):
        graph(2, [(0, 1, 0.0)])
    with pytest.raises(ValueError):
        graph(2, [(1, 1, 1.0)])
    with pytest.raises(IndexError):
        graph(2, [(0, 2, 1.0)])
    g = graph(2, [(0, 1, 1.0)])
    with pytest.raises(ValueError):
        g.add_edge(1, 0, 2.0)


def test_uncertainty_term():
    assert uncertainty_term(PoseGraph.from_spawn(Pose2D(0, 0, 0))) == 0.0
    k4 = graph(4, [(i, j, 1.0) for i, j in itertools.combinations(range(4), 2)])
    assert uncertainty_term(k4) == pytest.approx(math.log(16) / 3)


@settings(max_examples=60, deadline=None)
@given(connected_graphs(), st.floats(0.1, 10.0), st.data())
def test_adding_edge_increases_weight(g, w, data):
    n = len(g)
    missing = [(i, j) for i, j in itertools.combinations(range(n), 2) if not g.has_edge(i, j)]
    if not missing:
        return
    i, j = data.draw(st.sampled_from(missing))
    before = log_spanning_tree_weight(g)
    after = log_spanning_tree_weight(g.copy().add_edge(i, j, w))
    assert after > before


@settings(max_examples=60, deadline=None)
@given(connected_graphs(), st.randoms(use_true_random=False))
def test_relabel_invariance(g, rnd):
    perm = list(range(len(g)))
    rnd.shuffle(perm)
    relabeled = graph(len(g), [(perm[i], perm[j], w) for i, j, w in g.edges])
    assert log_spanning_tree_weight(relabeled) == pytest.approx(log_spanning_tree_weight(g), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(connected_graphs(), st.floats(0.2, 5.0))
def test_scaling_shifts_log_weight(g, c):
    scaled = graph(len(g), [(i, j, w * c) for i, j, w in g.edges])
    expect = log_spanning_tree_weight(g) + (len(g) - 1) * math.log(c)
    assert log_spanning_tree_weight(scaled) == pytest.approx(expect, abs=1e-8)


def test_odometry_chain():
    g = PoseGraph.from_spawn(Pose2D(0, 0, 0))
    for k in range(1, 4):
        add_odometry_node(g, Pose2D(float(k), 0, 0), 2.0)
    assert [(i, j) for i, j, _ in g.edges] == [(0, 1), (1, 2), (2, 3)]
    assert log_spanning_tree_weight(g) == pytest.approx(3 * math.log(2.0))
    with pytest.raises(ValueError):
        add_odometry_node(PoseGraph(), Pose2D(0, 0, 0), 1.0)
    with pytest.raises(ValueError):
        add_odometry_node(g, Pose2D(0, 0, 0), -1.0)


def test_loop_closure_around_square():
    g = PoseGraph.from_spawn(Pose2D(0, 0, 0))
    square = [(x, 0.0) for x in range(1, 4)] + [(3.0, y) for y in range(1, 4)] + \
             [(x, 3.0) for x in range(2, -1, -1)] + [(0.0, y) for y in (2.0, 1.0, 0.2)]
    for x, y in square:
        add_odometry_node(g, Pose2D(float(x), float(y), 0), 1.0)
        try_loop_closure(g, radius=0.5, weight=5.0, min_gap=10)
    loops = [(i, j, w) for i, j, w in g.edges if abs(i - j) > 1]
    assert loops == [(0, 12, 5.0)]
    before = len(g.edges)
    try_loop_closure(g, radius=0.5, weight=5.0, min_gap=10)
    assert len(g.edges) == before  # idempotent


def test_loop_closure_respects_gap_and_radius():
    g = PoseGraph.from_spawn(Pose2D(0, 0, 0))
    for k in range(5):
        add_odometry_node(g, Pose2D(0.1 * k, 0, 0), 1.0)
        try_loop_closure(g, radius=1.0, weight=5.0, min_gap=10)
    assert all(abs(i - j) == 1 for i, j, _ in g.edges)
    try_loop_closure(PoseGraph.from_spawn(Pose2D(0, 0, 0)), 1.0, 5.0)


def test_text_round_trip(tmp_path):
    g = graph(4, [(0, 1, 0.3), (1, 2, 1.0 / 3.0), (2, 3, 7.0), (0, 3, 5.0)])
    g.nodes[2] = Pose2D(1.25, -0.1, 0.7)
    back = PoseGraph.from_text(g.to_text())
    assert back.nodes == g.nodes and back.edges == g.edges
    g.save(tmp_path / "g.txt")
    assert (tmp_path / "g.txt").read_text().splitlines()[0] == "v 0 0.0 0.0 0.0"
    assert PoseGraph.from_text((tmp_path / "g.txt").read_text()).edges == g.edges
