import json
from pathlib import Path

import numpy as np
import pytest

from scaffdiff.domain import (
    K,
    VOCAB,
    DatasetError,
    PointSet,
    center_on_scaffold,
    decode_types,
    load_dataset,
    onehot_decode,
    onehot_encode,
    save_dataset,
    tuple_to_record,
)

from conftest import random_rotation

FIXTURE = Path(__file__).parent / "fixtures" / "three_complexes.jsonl"


def test_onehot_round_trip():
    assert np.array_equal(onehot_encode("C"), np.eye(K)[0])
    assert onehot_decode(np.eye(K)[0]) == "C"
    assert sorted(onehot_decode(row) for row in np.eye(K)) == sorted(VOCAB)
    assert len(set(VOCAB)) == K == 10


def test_argmax_decoding_of_noisy_vector():
    v = np.zeros(K)
    v[:3] = [0.1, 0.7, 0.2]
    assert onehot_decode(v) == VOCAB[1]


def test_unknown_element_lists_vocabulary():
    with pytest.raises(KeyError, match="Cl, Br"):
        onehot_encode("Xe")


def test_empty_file(tmp_path):
    (tmp_path / "e.jsonl").write_text("")
    assert load_dataset(tmp_path / "e.jsonl") == []


def test_fixture_loads_three_tuples():
    tuples = load_dataset(FIXTURE)
    assert len(tuples) == 3
    for t in tuples:
        assert t.rgroup is not None and t.affinity is not None
        assert np.all(t.pocket.residue_id >= 0)


def test_load_save_load_identity(tmp_path):
    tuples = load_dataset(FIXTURE)
    save_dataset(tmp_path / "again.jsonl", tuples)
    again = load_dataset(tmp_path / "again.jsonl")
    for a, b in zip(tuples, again):
        assert tuple_to_record(a) == tuple_to_record(b)
    assert (tmp_path / "again.jsonl").read_text() == FIXTURE.read_text()


def _first_record():
    return json.loads(FIXTURE.read_text().splitlines()[0])


def test_one_hot_violation_rejected_with_line(tmp_path):
    rec = _first_record()
    row = [0.0] * K
    row[0] = row[1] = 1.0
    rec["rgroup"]["types"][0] = row
    (tmp_path / "bad.jsonl").write_text("\n" + json.dumps(rec) + "\n")
    with pytest.raises(DatasetError, match="line 2.*one-hot violation"):
        load_dataset(tmp_path / "bad.jsonl")


@pytest.mark.parametrize("mutate, message", [
    (lambda r: r["scaffold"].pop("anchor"), "missing anchor"),
    (lambda r: r["pocket"].pop("residue_id"), "residue_id required"),
    (lambda r: r["scaffold"].__setitem__("anchor", 99), "anchor index 99"),
    (lambda r: r["rgroup"]["types"].__setitem__(0, "Xx"), "unknown element"),
    (lambda r: r["pocket"]["coords"].pop(), "coords but"),
])
def test_malformed_records(tmp_path, mutate, message):
    rec = _first_record()
    mutate(rec)
    (tmp_path / "bad.jsonl").write_text(json.dumps(rec) + "\n")
    with pytest.raises(DatasetError, match=message):
        load_dataset(tmp_path / "bad.jsonl")


def test_parse_error_reports_line(tmp_path):
    (tmp_path / "bad.jsonl").write_text(FIXTURE.read_text().splitlines()[0] + "\n{oops\n")
    with pytest.raises(DatasetError, match="line 2: parse error"):
        load_dataset(tmp_path / "bad.jsonl")


def test_centering_puts_scaffold_centroid_at_origin():
    for tup in load_dataset(FIXTURE):
        c, offset = center_on_scaffold(tup)
        assert np.abs(c.scaffold.coords.mean(0)).max() < 1e-12
        np.testing.assert_allclose(c.pocket.coords + offset, tup.pocket.coords, atol=1e-12)
        np.testing.assert_allclose(c.rgroup.coords + offset, tup.rgroup.coords, atol=1e-12)


def test_centering_idempotent_and_translation_invariant():
    tup = load_dataset(FIXTURE)[0]
    c, offset = center_on_scaffold(tup)
    c2, offset2 = center_on_scaffold(c)
    assert np.abs(offset2).max() < 1e-12
    moved, offset3 = center_on_scaffold(tup.translated([1.0, 2.0, 3.0]))
    np.testing.assert_allclose(offset3 - offset, [1.0, 2.0, 3.0], atol=1e-12)
    for a, b in ((c.pocket, moved.pocket), (c.scaffold, moved.scaffold), (c.rgroup, moved.rgroup)):
        assert np.abs(a.coords - b.coords).max() < 1e-12


def test_transform_keeps_types_and_residues():
    tup = load_dataset(FIXTURE)[1]
    rot = random_rotation(1)
    moved = tup.transformed(rot, np.array([1.0, 0.0, -1.0]))
    assert np.array_equal(moved.pocket.types, tup.pocket.types)
    assert np.array_equal(moved.pocket.residue_id, tup.pocket.residue_id)
    np.testing.assert_allclose(moved.scaffold.coords, tup.scaffold.coords @ rot.T + [1.0, 0.0, -1.0])


def test_pointset_defaults_ligand_residue_ids():
    ps = PointSet(np.zeros((2, 3)), np.eye(K)[:2])
    assert ps.residue_id.tolist() == [-1, -1]
    assert decode_types(ps.types) == ["C", "N"]
