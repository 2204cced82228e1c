import math

import numpy as np
import pytest

from lanegraph.baselines import (
    BaselineParams,
    baseline_constant_width,
    baseline_forward_connectivity,
    baseline_nearest_observation,
    baseline_perpendicular,
    run_baseline,
)
from lanegraph.geometry import CenterPoint, LanePair, Polyline, PolylineKind, RigidTransform2, apply_rigid, lane_width


def obs(*pts):
    return Polyline(np.array(pts, dtype=float), PolylineKind.BOUNDARY)


def close(pair, left, right):
    return np.allclose(pair.left, left, atol=1e-9) and np.allclose(pair.right, right, atol=1e-9)


def test_constant_width_examples():
    assert close(baseline_constant_width(CenterPoint((0, 0), (1, 0))), (0, 1.6), (0, -1.6))
    assert close(baseline_constant_width(CenterPoint((0, 0), (0, 1))), (-1.6, 0), (1.6, 0))
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.uniform(0, 2 * math.pi)
        c = CenterPoint(rng.normal(size=2), (math.cos(a), math.sin(a)))
        assert lane_width(baseline_constant_width(c)) == pytest.approx(3.2, abs=1e-12)


def test_nearest_observation_fallback_side():
    c = CenterPoint((0, 0), (1, 0))
    pair = baseline_nearest_observation(c, [], points=np.array([[0.0, 1.5]]))
    assert close(pair, (0, 1.5), (0, -1.6))


def test_nearest_observation_radius_is_inclusive():
    c = CenterPoint((0, 0), (1, 0))
    assert close(baseline_nearest_observation(c, [], points=np.array([[0.0, 5.0]])), (0, 5.0), (0, -1.6))
    assert close(baseline_nearest_observation(c, [], points=np.array([[0.0, 5.01]])), (0, 1.6), (0, -1.6))


def test_nearest_observation_uses_resampled_points():
    c = CenterPoint((0, 0), (1, 0))
    pair = baseline_nearest_observation(c, [obs((-3, 1.7), (3, 1.7)), obs((-3, -1.9), (3, -1.9))])
    assert close(pair, (0, 1.7), (0, -1.9))


def test_perpendicular_examples():
    c = CenterPoint((2.0, 0), (1, 0))
    lines = [obs((-10, 1.75), (10, 1.75)), obs((-10, -1.75), (10, -1.75))]
    assert close(baseline_perpendicular(c, lines), (2, 1.75), (2, -1.75))
    ahead = [obs((3.0, -4), (3.0, 4))]
    assert close(baseline_perpendicular(c, ahead), (2, 1.6), (2, -1.6))


def test_perpendicular_picks_nearest_crossing():
    c = CenterPoint((0, 0), (1, 0))
    lines = [obs((-1, 3.5), (1, 3.5)), obs((-1, 1.8), (1, 1.8)), obs((-1, -6), (1, -6))]
    assert close(baseline_perpendicular(c, lines), (0, 1.8), (0, -1.6))


def test_empty_observations_reduce_to_constant_width():
    rng = np.random.default_rng(1)
    for _ in range(10):
        a = rng.uniform(0, 2 * math.pi)
        c = CenterPoint(rng.normal(size=2) * 10, (math.cos(a), math.sin(a)))
        b1 = baseline_constant_width(c)
        for p in (baseline_nearest_observation(c, []), baseline_perpendicular(c, [])):
            assert close(p, b1.left, b1.right)


def test_forward_chain_on_straight_lane():
    centers = [CenterPoint((10.0 * i, 0), (1, 0)) for i in range(5)]
    pairs = [baseline_constant_width(c) for c in centers]
    A = baseline_forward_connectivity(centers, pairs)
    assert np.array_equal(A, np.eye(5, k=1, dtype=np.int8))


def test_forward_ignores_behind_and_picks_nearest():
    c0 = CenterPoint((0, 0), (1, 0))
    behind = CenterPoint((-10, 0), (1, 0))
    near, far = CenterPoint((10, 0), (1, 0)), CenterPoint((20, 0), (1, 0))
    centers = [c0, behind, far, near]
    pairs = [baseline_constant_width(c) for c in centers]
    A = baseline_forward_connectivity(centers, pairs)
    assert A[0].tolist() == [0, 0, 0, 1]
    assert A.sum(axis=1).max() <= 1


def test_baselines_rigid_equivariance():
    rng = np.random.default_rng(2)
    for _ in range(20):
        T = RigidTransform2(rng.uniform(-math.pi, math.pi), rng.uniform(-50, 50, 2))
        centers = [CenterPoint((8.0 * i, rng.normal() * 0.2), (1, 0)) for i in range(4)]
        lines = [obs((-5, 1.7 + rng.normal() * 0.1), (30, 1.7)), obs((-5, -1.8), (30, -1.8 + rng.normal() * 0.1))]
        tc = [apply_rigid(T, c) for c in centers]
        tl = [apply_rigid(T, p) for p in lines]
        for m in ("b1", "b2", "b3"):
            a, _ = run_baseline(m, centers, lines)
            b, _ = run_baseline(m, tc, tl)
            for p, q in zip(a, b):
                t = apply_rigid(T, p)
                assert np.allclose(t.left, q.left, atol=1e-6) and np.allclose(t.right, q.right, atol=1e-6)
        assert np.array_equal(run_baseline("b4", centers, lines)[1], run_baseline("b4", tc, tl)[1])


def test_params_validation_and_unknown_method():
    with pytest.raises(ValueError):
        BaselineParams(half_width=0)
    with pytest.raises(ValueError):
        BaselineParams(angle_window=(10, 200))
    with pytest.raises(ValueError):
        run_baseline("b9", [], [])
    with pytest.raises(ValueError):
        baseline_forward_connectivity([CenterPoint((0, 0), (1, 0))], [])
    assert isinstance(run_baseline("b1", [CenterPoint((0, 0), (1, 0))], [])[0][0], LanePair)
