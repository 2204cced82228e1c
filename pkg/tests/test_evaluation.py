import math

import numpy as np
import pytest

from lanegraph.evaluation import (
    CSV_COLUMNS,
    EvalError,
    ablation_csv,
    ablation_markdown,
    evaluate,
    run_ablation,
    split_dataset,
)
from lanegraph.geometry import CenterPoint, LanePair, Polyline, PolylineKind
from lanegraph.model import ModelConfig, TrainConfig, train_model
from lanegraph.records import Minimap

SMALL = ModelConfig(**{**ModelConfig().with_embed(16, 16).to_dict(), "transformer_heads": 2,
                       "encoder_layers": 1, "decoder_layers": 1})


def straight_minimap(width, odd="highway", q=4, with_obs=True):
    xs = np.linspace(-20, 25, 10)
    polys = [Polyline(np.column_stack([xs, np.zeros(10)]), PolylineKind.TRACE)]
    if with_obs:
        polys += [Polyline(np.column_stack([xs, np.full(10, s * width / 2)]), PolylineKind.BOUNDARY) for s in (1, -1)]
    centers = [CenterPoint((-15.0 + 10 * i, 0.0), (1.0, 0.0)) for i in range(q)]
    pairs = [LanePair((c.position[0], width / 2), (c.position[0], -width / 2)) for c in centers]
    return Minimap((0, 0), odd, polys, centers, pairs, np.eye(q, k=1, dtype=np.int8))


def test_constant_width_scores_zero_on_matching_width():
    rep = evaluate([straight_minimap(3.2), straight_minimap(3.2, "non-highway")], ["b1"])
    assert rep.get("highway", "b1").mlwe == pytest.approx(0.0, abs=1e-12)
    assert rep.get("non-highway", "b1").mlwe == pytest.approx(0.0, abs=1e-12)


def test_constant_width_monte_carlo():
    rng = np.random.default_rng(0)
    widths = rng.uniform(2.75, 3.75, 300)
    rep = evaluate([straight_minimap(w, q=2, with_obs=False) for w in widths], ["b1"])
    expected = (0.45 ** 2 + 0.55 ** 2) / 2
    assert abs(rep.get("highway", "b1").mlwe - expected) <= 0.02
    assert rep.get("highway", "b1").mlwe == pytest.approx(np.mean(np.abs(widths - 3.2)), abs=1e-9)


def test_observation_baselines_and_forward_links_on_clean_lane():
    rep = evaluate([straight_minimap(3.6)], ["b2", "b3", "b4"])
    assert rep.get("highway", "b3").mbpe == pytest.approx(0.0, abs=1e-9)
    assert rep.get("highway", "b2").mlwe == pytest.approx(0.0, abs=1e-9)
    b4 = rep.get("highway", "b4")
    assert b4.conn_f1 == 1.0 and b4.conn_acc == 1.0 and math.isnan(b4.mlwe)


def test_csv_schema_and_byte_stability():
    data = [straight_minimap(3.3), straight_minimap(3.0, "non-highway")]
    a = evaluate(data, ["b1", "b4"]).to_csv()
    b = evaluate(data, ["b1", "b4"]).to_csv()
    assert a == b
    lines = a.splitlines()
    assert lines[0].split(",") == CSV_COLUMNS
    assert len(lines) == 1 + 2 * 2
    md = evaluate(data, ["b1", "b4"]).to_markdown()
    assert md.startswith("| Method |") and "non-highway" in md


def test_aggregation_modes():
    data = [straight_minimap(3.3, q=3), straight_minimap(3.3, q=5)]
    pooled = evaluate(data, ["b4"], aggregation="pooled").get("highway", "b4")
    per = evaluate(data, ["b4"], aggregation="per_minimap").get("highway", "b4")
    assert pooled.conn_f1 == per.conn_f1 == 1.0
    assert pooled.conn_acc == pytest.approx(1.0)
    with pytest.raises(ValueError):
        evaluate(data, ["b4"], aggregation="median")


def test_method_errors():
    with pytest.raises(EvalError, match="unknown method"):
        evaluate([straight_minimap(3.2)], ["b7"])
    with pytest.raises(EvalError, match="lanegraph train"):
        evaluate([straight_minimap(3.2)], ["lmtnet"])


def test_queries_outside_range_are_left_out():
    rep = evaluate([straight_minimap(3.2), straight_minimap(3.2, q=1)], ["b1"])
    assert rep.n_minimaps["highway"] == 1


def test_split_dataset():
    items = list(range(40))
    tr, ev = split_dataset(items, 0.05, seed=3)
    assert len(ev) == 2 and len(tr) == 38 and set(tr) | set(ev) == set(items)
    assert split_dataset(items, 0.05, seed=3) == (tr, ev)
    with pytest.raises(ValueError):
        split_dataset(items, 1.0)
    with pytest.raises(ValueError):
        split_dataset([1], 0.5)


def test_lmtnet_is_scored():
    data = [straight_minimap(3.4), straight_minimap(3.0, "non-highway")]
    model = train_model(data, SMALL, TrainConfig(epochs=1)).model
    rep = evaluate(data, ["lmtnet"], model=model)
    row = rep.get("highway", "lmtnet")
    assert math.isfinite(row.mbpe) and math.isfinite(row.conn_f1)


def test_ablation_rows_are_reproducible():
    data = [straight_minimap(3.4), straight_minimap(3.0, "non-highway")]
    cfgs = [("shared/1", ModelConfig(**{**SMALL.to_dict(), "encoder_sharing": "shared"})), ("type_specific/1", SMALL),
            ("type_specific/2", ModelConfig(**{**SMALL.to_dict(), "decoder_layers": 2}))]
    tc = TrainConfig(epochs=1)
    a = run_ablation(data, data, tc, configs=cfgs)
    b = run_ablation(data, data, tc, configs=cfgs)
    assert ablation_csv(a) == ablation_csv(b)
    params = [r["params_m"] for r in a]
    assert params[0] < params[1] < params[2]
    assert ablation_markdown(a).count("\n") == 2 + 3
