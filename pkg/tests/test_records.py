import json

import numpy as np
import pytest

from lanegraph.records import SCHEMA_VERSION, RecordError, dumps, from_record, load_dataset, save_dataset, to_record
from lanegraph.synthgen import gen_dataset


@pytest.fixture(scope="module")
def minimaps():
    return gen_dataset(3, seed=11)


def test_round_trip_is_exact(minimaps, tmp_path):
    path = save_dataset(tmp_path / "d.jsonl", minimaps)
    back = load_dataset(path)
    assert len(back) == len(minimaps)
    for a, b in zip(minimaps, back):
        assert dumps(a) == dumps(b)
        assert np.array_equal(a.gt_adjacency, b.gt_adjacency)
        assert all(np.array_equal(p.points, q.points) for p, q in zip(a.polylines, b.polylines))
        assert a.tile_id == b.tile_id and a.odd == b.odd


def test_unlabeled_centers_survive(minimaps):
    rec = to_record(minimaps[0])
    rec["gt_pairs"][0] = {"bl": None, "br": None, "labeled": False}
    m = from_record(rec)
    assert m.gt_pairs[0] is None and not m.labeled[0]


def test_schema_mismatch(minimaps):
    rec = to_record(minimaps[0])
    rec["schema_version"] = SCHEMA_VERSION + 1
    with pytest.raises(RecordError, match="schema version"):
        from_record(rec)


def test_bad_adjacency(minimaps):
    rec = to_record(minimaps[0])
    n = len(rec["centers"])
    rec["gt_adjacency"] = [[0, n]]
    with pytest.raises(RecordError, match="out of range"):
        from_record(rec)
    rec["gt_adjacency"] = [[1, 1]]
    with pytest.raises(RecordError, match="self-edge"):
        from_record(rec)


def test_errors_report_line_number(minimaps, tmp_path):
    path = save_dataset(tmp_path / "d.jsonl", minimaps)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    del rec["centers"]
    lines[1] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(RecordError, match=r"d\.jsonl:2:"):
        load_dataset(path)


def test_empty_file_and_blank_lines(minimaps, tmp_path):
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    assert load_dataset(empty) == []
    spaced = tmp_path / "s.jsonl"
    spaced.write_text("\n" + dumps(minimaps[0]) + "\n\n")
    assert len(load_dataset(spaced)) == 1


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_dataset(tmp_path / "nope.jsonl")
