import re

import numpy as np

from lanegraph.evaluation import EvalReport, EvalRow
from lanegraph.geometry import CenterPoint, LanePair, Polyline, PolylineKind
from lanegraph.plotting import emit_plots, plot_metric_bars, plot_training_curve
from lanegraph.records import Minimap


def small_minimap(q=4):
    xs = np.linspace(-20, 20, 9)
    polys = [Polyline(np.column_stack([xs, np.full(9, y)]), k)
             for y, k in ((0.0, PolylineKind.TRACE), (1.7, PolylineKind.BOUNDARY))]
    centers = [CenterPoint((-15.0 + 10 * i, 0.0), (1.0, 0.0)) for i in range(q)]
    pairs = [LanePair((c.position[0], 1.7), (c.position[0], -1.7)) for c in centers]
    return Minimap((2, -1), "highway", polys, centers, pairs, np.eye(q, k=1, dtype=np.int8))


def test_plot_ids_match_prediction(tmp_path):
    m = small_minimap()
    pairs = np.array([p.as_array() for p in m.gt_pairs])
    adj = np.eye(4, k=1, dtype=np.int8)
    adj[0, 2] = 1
    svg = emit_plots(m, pairs, adj, tmp_path / "a.svg").read_text()
    assert len(set(re.findall(r'id="lanepair_(\d+)"', svg))) == 4
    edges = set(re.findall(r'id="edge_(\d+)_(\d+)"', svg))
    assert edges == {("0", "1"), ("1", "2"), ("2", "3"), ("0", "2")}


def test_plots_are_byte_stable(tmp_path):
    m = small_minimap()
    pairs = np.array([p.as_array() for p in m.gt_pairs])
    a = emit_plots(m, pairs, m.gt_adjacency, tmp_path / "a.svg").read_bytes()
    b = emit_plots(m, pairs, m.gt_adjacency, tmp_path / "b.svg").read_bytes()
    assert a == b


def test_plot_without_predictions(tmp_path):
    svg = emit_plots(small_minimap(), path=tmp_path / "c.svg", show_gt=False).read_text()
    assert "lanepair_" not in svg and "edge_" not in svg


def test_metric_and_curve_figures(tmp_path):
    rep = EvalReport([EvalRow("highway", "b1", 0.3, 0.2), EvalRow("highway", "b4", conn_acc=0.9, conn_f1=0.8),
                      EvalRow("non-highway", "b1", 0.4, 0.3)], {"highway": 3, "non-highway": 1})
    assert plot_metric_bars(rep, tmp_path / "m.svg").stat().st_size > 0
    hist = [{"epoch": e, "train_loss": 1.0 / e, "train_boundary": 0.5 / e, "train_connectivity": 0.5 / e}
            for e in range(1, 5)]
    assert plot_training_curve(hist, tmp_path / "h.svg").stat().st_size > 0
