import logging
from itertools import combinations
from pathlib import Path

import networkx as nx_graph
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scaffdiff import metrics
from scaffdiff.domain import AugmentedPocket, Pocket, PointSet, Scaffold, encode_types, load_dataset
from scaffdiff.metrics import (
    EvalReport,
    MetricsError,
    PocketReport,
    assemble,
    brute_force_interactions,
    canonical_hash,
    compare_models,
    conserved_interaction_stats,
    detect_interactions,
    evaluate,
    matched_rmsd,
    molecule_hash,
    uniqueness,
    validity,
    validity_failures,
)

from conftest import random_rotation

FIXTURES = Path(__file__).parent / "fixtures"


def _mol(symbols, coords):
    return PointSet(np.asarray(coords, dtype=float), encode_types(symbols))


def _chain(symbols, step=1.5, direction=(1.0, 0.0, 0.0), start=(0.0, 0.0, 0.0)):
    d = np.asarray(direction) / np.linalg.norm(direction)
    return _mol(symbols, [np.asarray(start) + k * step * d for k in range(len(symbols))])


def _graph(mol):
    g = nx_graph.Graph()
    for i, s in enumerate(mol.symbols):
        g.add_node(i, element=s)
    g.add_edges_from(metrics.infer_bonds(mol.coords, mol.symbols))
    return g


def _isomorphism_classes(mols):
    graphs = [_graph(m) for m in mols]
    match = lambda a, b: a["element"] == b["element"]
    reps = []
    for g in graphs:
        if not any(nx_graph.is_isomorphic(g, r, node_match=match) for r in reps):
            reps.append(g)
    return len(reps)


# validity

def test_fixture_tuples_are_valid():
    tuples = load_dataset(FIXTURES / "three_complexes.jsonl")
    for t in tuples:
        assert validity([assemble(t.scaffold, t.rgroup)], t.scaffold) == 1.0


def test_clash_is_invalid(dataset):
    t = dataset[0]
    coords = t.rgroup.coords.copy()
    coords[-1] = coords[-2] + np.array([0.3, 0.0, 0.0])
    mol = assemble(t.scaffold, PointSet(coords, t.rgroup.types))
    assert "clash" in validity_failures(mol, t.scaffold)
    assert validity([mol, assemble(t.scaffold, t.rgroup)], t.scaffold) == 0.5


def test_empty_list_validity_warns(caplog, dataset):
    with caplog.at_level(logging.WARNING):
        assert validity([], dataset[0].scaffold) == 0.0
    assert "empty" in caplog.text


def test_individual_rules():
    scaffold = Scaffold([[0.0, 0, 0], [1.5, 0, 0]], encode_types(["C", "C"]), None, 1)
    ok = _mol(["C", "C", "O"], [[0, 0, 0], [1.5, 0, 0], [3.0, 0, 0]])
    assert validity_failures(ok, scaffold) == []
    far = _mol(["C", "C", "O"], [[0, 0, 0], [1.5, 0, 0], [5.0, 0, 0]])
    assert set(validity_failures(far, scaffold)) == {"anchor", "connectivity"}
    moved = _mol(["C", "N", "O"], [[0, 0, 0], [1.5, 0, 0], [3.0, 0, 0]])
    assert validity_failures(moved, scaffold) == ["scaffold"]
    # an O with three bonded neighbours
    crowded = _mol(["C", "C", "O", "C", "C"],
                   [[0, 0, 0], [1.5, 0, 0], [2.9, 0, 0], [2.9, 1.4, 0], [2.9, -1.4, 0]])
    assert "valence" in validity_failures(crowded, scaffold)


# uniqueness

def test_three_of_five_distinct():
    rot = random_rotation(3)
    mols = [
        _chain(["C", "C", "C"]),
        _chain(["C", "C", "N"]),
        _chain(["C", "N", "C"]),
        _chain(["C", "C", "C"], direction=(0.0, 1.0, 1.0), start=(4.0, 0.0, 0.0)),
        _chain(["N", "C", "C"]).transformed(rot, 2.0),
    ]
    assert _isomorphism_classes(mols) == 3
    assert uniqueness(mols) == 0.6


def test_copies_give_one_over_n():
    m = _chain(["C", "O", "C", "N"])
    assert uniqueness([m] * 4) == 0.25
    assert uniqueness([_chain(["C"] * k) for k in range(1, 6)]) == 1.0


def test_uniqueness_empty_raises():
    with pytest.raises(MetricsError):
        uniqueness([])


def test_uniqueness_permutation_invariance(dataset):
    mols = [assemble(t.scaffold, t.rgroup) for t in dataset] + [assemble(dataset[0].scaffold, dataset[0].rgroup)]
    base = uniqueness(mols)
    perm = np.random.default_rng(0).permutation(len(mols))
    assert uniqueness([mols[i] for i in perm]) == base
    shuffled = []
    for k, m in enumerate(mols):
        order = np.random.default_rng(k).permutation(len(m))
        shuffled.append(PointSet(m.coords[order], m.types[order]))
    assert [molecule_hash(a) for a in mols] == [molecule_hash(b) for b in shuffled]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_hash_agrees_with_isomorphism(seed):
    rng = np.random.default_rng(seed)

    def random_graph():
        n = int(rng.integers(2, 7))
        sym = list(rng.choice(["C", "N", "O"], size=n))
        edges = [(i, j) for i, j in combinations(range(n), 2) if rng.random() < 0.4]
        return sym, edges

    (sa, ea), (sb, eb) = random_graph(), random_graph()
    if rng.random() < 0.5:
        # a relabelled copy of the first graph
        perm = rng.permutation(len(sa))
        sb = [None] * len(sa)
        for i, p in enumerate(perm):
            sb[p] = sa[i]
        eb = [(min(perm[i], perm[j]), max(perm[i], perm[j])) for i, j in ea]

    def g(sym, edges):
        out = nx_graph.Graph()
        out.add_nodes_from((i, {"element": s}) for i, s in enumerate(sym))
        out.add_edges_from(edges)
        return out

    iso = nx_graph.is_isomorphic(g(sa, ea), g(sb, eb), node_match=lambda a, b: a["element"] == b["element"])
    assert (canonical_hash(sa, ea) == canonical_hash(sb, eb)) == iso


# interactions

def _pocket(symbols, coords, names=None, cons=None, residue_id=None):
    n = len(symbols)
    rid = list(range(n)) if residue_id is None else residue_id
    return Pocket(np.asarray(coords, float), encode_types(symbols), rid, names, cons)


def test_hbond_at_2_9():
    pocket = _pocket(["O"], [[2.9, 0, 0]])
    recs = detect_interactions(pocket, _mol(["N"], [[0, 0, 0]]))
    assert [(r.kind, r.ligand_index, r.pocket_index) for r in recs] == [("hbond", 0, 0)]
    assert recs[0].distance == pytest.approx(2.9)


def test_carbons_beyond_cutoff():
    assert detect_interactions(_pocket(["C"], [[4.5, 0, 0]]), _mol(["C"], [[0, 0, 0]])) == []
    assert len(detect_interactions(_pocket(["C"], [[3.9, 0, 0]]), _mol(["C"], [[0, 0, 0]]))) == 1


def test_salt_bridge_needs_charges():
    # a carboxylate-like C(=O)O group facing a lysine nitrogen
    lig = _mol(["C", "O", "O"], [[0, 0, 0], [1.25, 0, 0], [-0.6, 1.1, 0]])
    pocket = _pocket(["N"], [[4.0, 0, 0]], names=("LYS",))
    kinds = {r.kind for r in detect_interactions(pocket, lig)}
    assert kinds == {"hbond", "saltbridge"}
    neutral = _pocket(["N"], [[4.0, 0, 0]], names=("ALA",))
    assert {r.kind for r in detect_interactions(neutral, lig)} == {"hbond"}


def _complex_records(recs):
    return [(r.key(), r.residue_id, r.conserved) for r in recs]


def test_matches_brute_force(dataset):
    for t in dataset:
        lig = assemble(t.scaffold, t.rgroup)
        aug = t.augmented_pocket()
        a, b = detect_interactions(aug, lig), brute_force_interactions(aug, lig)
        assert _complex_records(a) == _complex_records(b)
        assert all(abs(x.distance - y.distance) < 1e-12 for x, y in zip(a, b))
        assert [r.key()[1:] for r in a] == sorted(r.key()[1:] for r in a)


def test_interactions_rigid_invariance(dataset):
    t = dataset[1]
    rot, move = random_rotation(8), np.array([10.0, -3.0, 7.0])
    lig = assemble(t.scaffold, t.rgroup)
    a = detect_interactions(t.augmented_pocket(), lig)
    b = detect_interactions(t.augmented_pocket().transformed(rot, move), lig.transformed(rot, move))
    assert _complex_records(a) == _complex_records(b)
    assert all(abs(x.distance - y.distance) < 1e-9 for x, y in zip(a, b))


def test_conserved_counts_match_manual_filter(dataset):
    t = dataset[2]
    aug = t.augmented_pocket()
    mols = [assemble(t.scaffold, t.rgroup)]
    mean, counts = conserved_interaction_stats(aug, mols)
    manual = [r for r in detect_interactions(aug, mols[0]) if aug.conservation[r.pocket_index, 0] > 0.4]
    assert counts == [len(manual)] and mean == len(manual)


def test_conserved_count_edge_cases():
    lig = _mol(["N", "C"], [[0, 0, 0], [1.5, 0, 0]])
    pocket = _pocket(["O", "C"], [[2.9, 0, 0], [4.5, 0, 0]], residue_id=[5, 5])
    low = AugmentedPocket(pocket, [0.4, 0.4])
    assert conserved_interaction_stats(low, [lig])[1] == [0]
    high = AugmentedPocket(pocket, [0.9, 0.9])
    assert conserved_interaction_stats(high, [lig])[1] == [len(detect_interactions(high, lig))]
    with pytest.raises(MetricsError):
        conserved_interaction_stats(pocket, [lig])


# reports

def _report(values):
    per = {f"p{i}": PocketReport(1, v, v, v, v) for i, v in enumerate(values)}
    return EvalReport(0.0, 0.0, 0.0, 0.0, per)


def test_compare_models_counts():
    a, b = _report([1.0, 0.5, 0.3, 0.2]), _report([0.0, 0.5, 0.9, 0.1])
    out = compare_models(a, b)
    assert out["validity"] == {"a_wins": 0.5, "b_wins": 0.25, "ties": 0.25}
    same = compare_models(a, a)
    assert all(v == {"a_wins": 0.0, "b_wins": 0.0, "ties": 1.0} for v in same.values())


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=12))
def test_compare_models_partition(pairs):
    a, b = _report([x / 3 for x, _ in pairs]), _report([y / 3 for _, y in pairs])
    for v in compare_models(a, b).values():
        assert v["a_wins"] + v["b_wins"] + v["ties"] == pytest.approx(1.0, abs=1e-15)


def test_compare_models_mismatch():
    with pytest.raises(MetricsError):
        compare_models(_report([1.0, 0.0]), _report([1.0]))


def test_evaluate_on_ground_truth(dataset):
    gen = {t.id: [t.rgroup, t.rgroup] for t in dataset}
    report = evaluate(dataset, gen)
    assert report.validity == 1.0
    assert report.uniqueness == 0.5
    assert set(report.per_pocket) == {t.id for t in dataset}
    assert EvalReport.from_dict(report.as_dict()).as_dict() == report.as_dict()
    with pytest.raises(MetricsError):
        evaluate(dataset, {"nope": [dataset[0].rgroup]})


def test_matched_rmsd_ignores_atom_order(dataset):
    rg = dataset[0].rgroup
    order = np.random.default_rng(1).permutation(len(rg))
    assert matched_rmsd(rg, PointSet(rg.coords[order], rg.types[order])) == 0.0
    assert matched_rmsd(rg, rg.translated([0.0, 0.0, 2.0])) == pytest.approx(2.0)
    assert matched_rmsd(rg, PointSet(rg.coords[:1], rg.types[:1])) == float("inf")
