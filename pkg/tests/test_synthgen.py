import filecmp

import numpy as np
import pytest

from lanegraph.geometry import lane_width, point_to_polyline
from lanegraph.synthgen import (
    DEFAULT_MIX,
    NoiseSpec,
    ScenarioError,
    ScenarioKind,
    ScenarioSpec,
    clip_ground_truth,
    gen_dataset,
    gen_ground_truth,
    sample_scenario,
    simulate_drives,
    simulate_fleet,
    simulate_observations,
    world_markings,
)


def _min_dist(points, polylines):
    return max(min(point_to_polyline(p, q.points)[0] for q in polylines) for p in points)


def test_straight_highway_nodes_and_widths():
    gt = gen_ground_truth(ScenarioSpec(ScenarioKind.STRAIGHT_HIGHWAY, 2, 3.2, 100.0, 0.0, seed=1), spacing=10.0)
    assert len(gt.centers) == 2 * 11
    assert all(lane_width(p) == pytest.approx(3.2, abs=1e-12) for p in gt.lane_graph.pairs)


def test_ramp_fan_out_and_fan_in():
    fork = gen_ground_truth(ScenarioSpec(ScenarioKind.RAMP_FORK, 2, 3.5, 100.0, 1 / 150, seed=2))
    out_deg = fork.lane_graph.adjacency.sum(axis=1)
    assert int(np.sum(out_deg == 2)) == 1 and out_deg.max() == 2
    merge = gen_ground_truth(ScenarioSpec(ScenarioKind.RAMP_MERGE, 2, 3.5, 100.0, 1 / 150, seed=2))
    in_deg = merge.lane_graph.adjacency.sum(axis=0)
    assert int(np.sum(in_deg == 2)) == 1 and in_deg.max() == 2


def test_ground_truth_is_deterministic():
    spec = ScenarioSpec(ScenarioKind.CURVED_HIGHWAY, 3, 3.4, 80.0, 1 / 600, seed=9)
    a, b = gen_ground_truth(spec), gen_ground_truth(spec)
    assert all(np.array_equal(x.points, y.points) for x, y in zip(a.lanes, b.lanes))
    assert np.array_equal(a.lane_graph.adjacency, b.lane_graph.adjacency)
    assert all(np.array_equal(x.as_array(), y.as_array()) for x, y in zip(a.lane_graph.pairs, b.lane_graph.pairs))


@pytest.mark.parametrize("kind", list(ScenarioKind))
def test_adjacency_respects_driving_direction(kind):
    k = {ScenarioKind.CURVED_HIGHWAY: 1 / 500, ScenarioKind.RAMP_FORK: 1 / 150, ScenarioKind.RAMP_MERGE: 1 / 150,
         ScenarioKind.TWO_LANE_RURAL: 1 / 300}.get(kind, 0.0)
    lanes = 2
    gt = clip_ground_truth(gen_ground_truth(ScenarioSpec(kind, lanes, 3.25, 80.0, k, seed=4)))
    A = gt.lane_graph.adjacency
    assert np.all(np.diag(A) == 0)
    for i, j in zip(*np.nonzero(A)):
        c, d = gt.centers[i], gt.centers[j]
        assert (d.position - c.position) @ c.direction > 0


def test_successor_relations_are_edges():
    gt = gen_ground_truth(ScenarioSpec(ScenarioKind.T_INTERSECTION, 2, 3.0, 80.0, seed=5))
    first, last = {}, {}
    for n, lane in enumerate(gt.node_lane):
        first.setdefault(lane, n)
        last[lane] = n
    for lane in gt.lanes:
        for s in lane.successors:
            assert gt.lane_graph.adjacency[last[lane.id], first[s]] == 1


def test_spec_validation():
    with pytest.raises(ScenarioError):
        ScenarioSpec(ScenarioKind.STRAIGHT_HIGHWAY, 2, 5.0, 100.0)
    with pytest.raises(ScenarioError):
        ScenarioSpec(ScenarioKind.STRAIGHT_HIGHWAY, 2, 3.5, 40.0)
    with pytest.raises(ScenarioError):
        gen_ground_truth(ScenarioSpec(ScenarioKind.CURVED_HIGHWAY, 4, 3.5, 100.0, 1 / 10))
    with pytest.raises(ValueError):
        NoiseSpec(boundary_dropout_prob=1.5)
    with pytest.raises(ValueError):
        NoiseSpec(trace_lateral_sigma=-1.0)


def test_noiseless_traces_lie_on_centerlines():
    gt = gen_ground_truth(ScenarioSpec(ScenarioKind.CURVED_HIGHWAY, 2, 3.5, 90.0, 1 / 700, seed=6))
    fleet = simulate_fleet(gt, NoiseSpec.zero(traces_per_lane=(1, 1)), seed=3)
    assert len(fleet.traces) == len(gt.lanes)
    for tr, lane_id in zip(fleet.traces, fleet.trace_lane):
        lane = next(l for l in gt.lanes if l.id == lane_id)
        assert max(point_to_polyline(p, lane.points)[0] for p in tr.points) < 1e-9


def test_traces_per_lane_range():
    counts = []
    noise = NoiseSpec(boundary_dropout_prob=1.0)  # no markings keeps this fast
    rng = np.random.default_rng(0)
    for i in range(100):
        gt = gen_ground_truth(sample_scenario(DEFAULT_MIX, rng, i))
        fleet = simulate_fleet(gt, noise, seed=i)
        counts += list(np.bincount(fleet.trace_lane))
    assert min(counts) >= 5 and max(counts) <= 10
    assert 5 <= np.mean(counts) <= 10


def test_full_dropout_gives_no_observations():
    gt = gen_ground_truth(ScenarioSpec(ScenarioKind.STRAIGHT_HIGHWAY, 2, 3.5, 80.0, seed=1))
    assert simulate_observations(gt, NoiseSpec(boundary_dropout_prob=1.0), seed=1) == []
    assert len(simulate_drives(gt, NoiseSpec(boundary_dropout_prob=1.0), seed=1)) >= 10


def test_noiseless_observations_on_gt_boundaries():
    gt = gen_ground_truth(ScenarioSpec(ScenarioKind.RAMP_FORK, 2, 3.5, 90.0, 1 / 150, seed=8))
    obs = simulate_observations(gt, NoiseSpec.zero(), seed=2)
    assert obs
    assert _min_dist(np.concatenate([o.points for o in obs]), gt.boundaries) < 1e-9


def test_dropout_fraction_monte_carlo():
    noise = NoiseSpec(boundary_dropout_prob=0.3, false_positive_rate=0.0, segment_length=(2.0, 4.0))
    total = kept = 0
    seed = 0
    while total < 1000:
        gt = gen_ground_truth(ScenarioSpec(ScenarioKind.STRAIGHT_HIGHWAY, 3, 3.5, 120.0, seed=seed))
        _, t, k = world_markings(gt, noise, np.random.default_rng(seed))
        total, kept, seed = total + t, kept + k, seed + 1
    assert abs(kept / total - 0.7) <= 0.03


def test_gen_dataset_byte_identical(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    gen_dataset(10, seed=7, path=a)
    gen_dataset(10, seed=7, path=b)
    assert filecmp.cmp(a, b, shallow=False)


def test_default_mix_odd_ratio_and_center_count():
    rng = np.random.default_rng(1)
    specs = [sample_scenario(DEFAULT_MIX, rng, i) for i in range(3000)]
    highway = np.mean([s.kind.odd == "highway" for s in specs])
    assert abs(highway - 2 / 3) <= 0.1 * 2 / 3
    counts = [len(clip_ground_truth(gen_ground_truth(s)).centers) for s in specs[:150]]
    assert 8 <= np.mean(counts) <= 20


def test_gen_dataset_tags_odd():
    ms = gen_dataset(6, seed=3)
    assert {m.odd for m in ms} <= {"highway", "non-highway"}
    assert all(m.stage == "raw" and len(m.centers) >= 2 for m in ms)
    with pytest.raises(ValueError):
        gen_dataset(0, seed=1)
