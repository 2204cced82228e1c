import math

import numpy as np
import pytest
import torch

from lanegraph.geometry import CenterPoint, LanePair, Polyline, PolylineKind, lane_width
from lanegraph.model import (
    EncoderSharing,
    LMTNet,
    LossError,
    ModelConfig,
    QueryCountError,
    augment_rotate,
    build_point_features,
    collate,
    count_parameters,
    encode_inputs,
    encode_minimap,
    joint_loss,
    predict_adjacency,
    toy_config,
)
from lanegraph.model.network import PolylineEncoder
from lanegraph.records import Minimap

TINY = ModelConfig().with_embed(16, 16)
TINY = ModelConfig(**{**TINY.to_dict(), "polyline_mhsa_heads": 2, "transformer_heads": 2,
                      "encoder_layers": 1, "decoder_layers": 1})


def rand_polylines(rng, n):
    out = []
    for _ in range(n):
        k = int(rng.integers(2, 8))
        pts = rng.uniform(-50, 50, 2) + np.cumsum(rng.uniform(0.5, 3.0, (k, 2)), axis=0)
        kind = PolylineKind.TRACE if rng.random() < 0.5 else PolylineKind.BOUNDARY
        out.append(Polyline(pts, kind))
    return out


def rand_centers(rng, n):
    out = []
    for _ in range(n):
        a = rng.uniform(0, 2 * math.pi)
        out.append(CenterPoint(rng.uniform(-60, 60, 2), (math.cos(a), math.sin(a))))
    return out


def net(config=TINY, seed=0):
    torch.manual_seed(seed)
    return LMTNet(config).double().eval()


def rand_minimap(rng, q=5, p=6):
    centers = rand_centers(rng, q)
    pairs = [LanePair(c.position + [0, 1.7], c.position - [0, 1.7]) for c in centers]
    adj = (rng.random((q, q)) < 0.3).astype(np.int8)
    np.fill_diagonal(adj, 0)
    return Minimap((0, 0), "highway", rand_polylines(rng, p), centers, pairs, adj)


def test_point_features():
    f = build_point_features(Polyline(np.array([[0.0, 0.0], [1.0, 0.0]]), PolylineKind.TRACE))
    assert f.tolist() == [[0, 0, 1, 0, 1, 0]]
    pts = np.cumsum(np.ones((7, 2)), axis=0)
    f = build_point_features(Polyline(pts, PolylineKind.BOUNDARY))
    assert f.shape == (6, 6) and np.all(f[:, 4:] == [0, 1])
    r = build_point_features(Polyline(pts[::-1], PolylineKind.BOUNDARY))
    assert np.array_equal(r[:, :2], f[::-1, 2:4]) and np.array_equal(r[:, 2:4], f[::-1, :2])


def test_polyline_encoder_row_permutation_and_single_row():
    torch.manual_seed(0)
    enc = PolylineEncoder(16, 2).double()
    x = torch.randn(1, 9, 6, dtype=torch.float64)
    perm = torch.randperm(9)
    assert torch.allclose(enc(x), enc(x[:, perm]), atol=1e-6)
    one = x[:, :1]
    h = enc.proj(one)
    attn, _ = enc.mhsa(h, h, h)
    assert torch.allclose(enc(one), attn[:, 0], atol=1e-12)


def test_polyline_encoder_duplicate_row():
    # a duplicated row reweights attention; the pooled output moves, so only closeness is claimed
    torch.manual_seed(0)
    enc = PolylineEncoder(16, 2).double()
    x = torch.randn(1, 5, 6, dtype=torch.float64)
    dup = torch.cat([x, x[:, :1]], dim=1)
    delta = (enc(x) - enc(dup)).abs().max().item()
    assert delta < 1.0


def test_center_encoder_is_affine():
    m = net()
    c = torch.tensor([[3.0, -4.0]], dtype=torch.float64)
    bias = m.center_encoder.bias
    assert torch.allclose(m.encode_centers(torch.zeros_like(c)), bias[None])
    assert torch.allclose(m.encode_centers(2 * c) - 2 * m.encode_centers(c), -bias[None])
    assert not torch.allclose(m.encode_centers(c), m.encode_centers(c + 0.5))


def test_forward_shapes_and_query_limits():
    rng = np.random.default_rng(0)
    m = net()
    pairs, logits, tokens = m.forward_minimap(rand_polylines(rng, 4), rand_centers(rng, 7))
    assert pairs.shape == (7, 4) and logits.shape == (7, 7) and tokens.shape == (7, 16)
    with pytest.raises(QueryCountError):
        m.forward_minimap(rand_polylines(rng, 4), rand_centers(rng, 1))
    with pytest.raises(QueryCountError):
        m.forward_minimap(rand_polylines(rng, 4), rand_centers(rng, 51))
    with pytest.raises(ValueError):
        m.forward_minimap([], rand_centers(rng, 3))


@pytest.mark.parametrize("sharing", list(EncoderSharing))
def test_query_and_polyline_permutations(sharing):
    rng = np.random.default_rng(1)
    m = net(ModelConfig(**{**TINY.to_dict(), "encoder_sharing": sharing}))
    for _ in range(10):
        polys, centers = rand_polylines(rng, int(rng.integers(1, 8))), rand_centers(rng, int(rng.integers(2, 9)))
        with torch.no_grad():
            p0, l0, _ = m.forward_minimap(polys, centers)
            qp = rng.permutation(len(centers))
            p1, l1, _ = m.forward_minimap(polys, [centers[i] for i in qp])
            pp = rng.permutation(len(polys))
            p2, l2, _ = m.forward_minimap([polys[i] for i in pp], centers)
        assert torch.allclose(p1, p0[qp], atol=1e-6)
        assert torch.allclose(l1, l0[qp][:, qp], atol=1e-6)
        assert torch.allclose(p2, p0, atol=1e-6) and torch.allclose(l2, l0, atol=1e-6)


def test_padding_does_not_leak():
    rng = np.random.default_rng(2)
    m = net()
    small = encode_inputs(rand_polylines(rng, 2), rand_centers(rng, 3))
    big = encode_inputs(rand_polylines(rng, 7), rand_centers(rng, 9))
    with torch.no_grad():
        alone_p, alone_l, _ = m(collate([small], torch.float64))
        both_p, both_l, _ = m(collate([small, big], torch.float64))
    assert torch.allclose(both_p[0, :3], alone_p[0], atol=1e-6)
    assert torch.allclose(both_l[0, :3, :3], alone_l[0], atol=1e-6)


def test_diagonal_logits_masked():
    rng = np.random.default_rng(3)
    _, logits, _ = net().forward_minimap(rand_polylines(rng, 3), rand_centers(rng, 4))
    assert predict_adjacency(logits).diagonal().sum() == 0
    assert torch.all(logits.diagonal() == -100.0)


def test_predict_adjacency_threshold_semantics():
    z = np.full((2, 2), math.log(0.8 / 0.2))
    assert predict_adjacency(z)[0, 1] == 1
    z = np.full((2, 2), math.log(0.79 / 0.21))
    assert predict_adjacency(z)[0, 1] == 0
    assert predict_adjacency(np.full((3, 3), -np.inf)).sum() == 0
    rng = np.random.default_rng(4)
    logits = rng.normal(0, 3, (12, 12))
    counts = [predict_adjacency(logits, t).sum() for t in np.linspace(0.05, 0.95, 20)]
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    with pytest.raises(ValueError):
        predict_adjacency(np.zeros(3))


def test_loss_examples():
    gt = torch.tensor([[0.0, 1.6, 0.0, -1.6]], dtype=torch.float64)
    pred = gt + torch.tensor([[0.3, 0.4, 0.0, 0.0]], dtype=torch.float64)
    adj = torch.zeros(1, 1, dtype=torch.float64)
    total, b, c = joint_loss(pred, gt, torch.full((1, 1), -1e9, dtype=torch.float64), adj)
    assert b.item() == pytest.approx(0.5 ** 2 / 2)
    assert c.item() == pytest.approx(0.0, abs=1e-30)
    A = torch.tensor([[0.0, 1.0], [0.0, 0.0]], dtype=torch.float64)
    logits = torch.where(A > 0, 1e9, -1e9)
    gt2 = gt.repeat(2, 1)
    total, b, c = joint_loss(gt2, gt2, logits, A)
    assert total.item() == pytest.approx(0.0, abs=1e-30)
    _, _, c = joint_loss(gt2, gt2, torch.zeros(2, 2, dtype=torch.float64), A)
    assert c.item() == pytest.approx(math.log(2))


def test_loss_decomposition_and_masks():
    rng = np.random.default_rng(5)
    pred = torch.tensor(rng.normal(size=(2, 4, 4)))
    gt = torch.tensor(rng.normal(size=(2, 4, 4)))
    logits = torch.tensor(rng.normal(size=(2, 4, 4)))
    adj = torch.tensor((rng.random((2, 4, 4)) < 0.3).astype(float))
    pm = torch.tensor([[True, False, True, True], [True, True, False, False]])
    qm = torch.tensor([[True, True, True, True], [True, True, True, False]])
    total, b, c = joint_loss(pred, gt, logits, adj, alpha=0.7, pair_mask=pm, query_mask=qm)
    assert (total - b - 0.7 * c).item() == 0.0
    sel = pm & qm
    d = (pred - gt)[sel]
    expected_b = ((d[:, :2] ** 2).sum(-1) + (d[:, 2:] ** 2).sum(-1)).sum() / (2 * sel.sum())
    assert b.item() == pytest.approx(expected_b.item(), rel=1e-12)
    with pytest.raises(LossError, match="no labeled pairs"):
        joint_loss(pred, gt, logits, adj, pair_mask=torch.zeros(2, 4, dtype=torch.bool))
    with pytest.raises(LossError):
        joint_loss(pred, gt[:, :3], logits, adj)


def test_augment_rotate():
    rng = np.random.default_rng(6)
    m = rand_minimap(rng)
    twice = augment_rotate(augment_rotate(m, 180), 180)
    for a, b in zip(m.polylines, twice.polylines):
        assert np.allclose(a.points, b.points, atol=1e-9)
    for angle in (90, 180, 270):
        r = augment_rotate(m, angle)
        assert [lane_width(p) for p in r.gt_pairs] == pytest.approx([lane_width(p) for p in m.gt_pairs], abs=1e-12)
        assert np.array_equal(r.gt_adjacency, m.gt_adjacency)
        assert not np.allclose(r.centers[0].position, m.centers[0].position)
    with pytest.raises(ValueError):
        augment_rotate(m, 45)


def test_rotation_changes_loss_of_untrained_model():
    rng = np.random.default_rng(7)
    m = net()
    mm = rand_minimap(rng)
    losses = []
    for mp in (mm, augment_rotate(mm, 90)):
        batch = collate([encode_minimap(mp)], torch.float64)
        with torch.no_grad():
            pairs, logits, _ = m(batch)
            losses.append(joint_loss(pairs, batch["target_pairs"], logits, batch["target_adj"],
                                     pair_mask=batch["pair_mask"])[0].item())
    assert losses[0] != losses[1]


def test_parameter_counts():
    counts = {}
    for s, k in [("shared", 4), ("type_specific", 1), ("type_specific", 2), ("type_specific", 4),
                 ("type_specific", 6)]:
        counts[(s, k)] = count_parameters(ModelConfig(encoder_sharing=s, decoder_layers=k))
    assert abs(counts[("type_specific", 4)] - 3.71e6) <= 0.15 * 3.71e6
    assert counts[("shared", 4)] < counts[("type_specific", 4)]
    steps = [counts[("type_specific", 2)] - counts[("type_specific", 1)],
             (counts[("type_specific", 4)] - counts[("type_specific", 2)]) / 2,
             (counts[("type_specific", 6)] - counts[("type_specific", 4)]) / 2]
    assert steps[0] == steps[1] == steps[2]
    assert abs(steps[0] - 0.6e6) <= 0.15 * 0.6e6
    assert count_parameters(toy_config()) < count_parameters(ModelConfig())


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(embed_dim=30, transformer_heads=4, pair_head_dims=(30, 32, 16), conn_head_dims=(60, 256))
    with pytest.raises(ValueError):
        ModelConfig(connectivity_threshold=1.0)
    with pytest.raises(ValueError):
        ModelConfig(pair_head_dims=(64, 32, 16))
    with pytest.raises(ValueError):
        ModelConfig.from_dict({"nope": 1})
    cfg = toy_config(decoder_layers=2)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
