import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scaffdiff.conservation import (
    AMINO_ACIDS,
    A3mParseError,
    augment_pocket,
    column_conservation,
    column_score,
    conserved_residues,
    parse_a3m,
    read_a3m,
)
from scaffdiff.domain import K, Pocket

FIXTURE = Path(__file__).parent / "fixtures" / "three_rows.a3m"


def _pocket(residue_ids):
    n = len(residue_ids)
    return Pocket(np.arange(3 * n, dtype=float).reshape(n, 3), np.tile(np.eye(K)[0], (n, 1)), residue_ids)


def test_single_query():
    msa = parse_a3m(">q\nACDE\n")
    assert msa.rows == ("ACDE",)


def test_lowercase_insertions_stripped():
    msa = parse_a3m(">q\nACDE\n>h\nAaaCDdE\n")
    assert msa.rows[1] == "ACDE"


def test_fixture_columns_match_hand_alignment():
    msa = read_a3m(FIXTURE)
    assert msa.names == ("query", "hit1", "hit2")
    assert [msa.column(j) for j in range(5)] == [
        list("MMM"), list("KK-"), list("TTT"), list("AA-"), list("YFY"),
    ]


def test_round_trip_through_a3m_text():
    msa = read_a3m(FIXTURE)
    assert parse_a3m(msa.to_a3m()) == msa


def test_query_gap_columns_removed():
    msa = parse_a3m(">q\nA-C\n>h\nAWC\n")
    assert msa.rows == ("AC", "AC")


def test_ragged_and_illegal_rows():
    with pytest.raises(A3mParseError, match="row 1"):
        parse_a3m(">q\nACD\n>h\nAC\n")
    with pytest.raises(A3mParseError, match=r"row 1 \(line 4, col 2\)"):
        parse_a3m(">q\nACD\n>h\nA1D\n")
    with pytest.raises(A3mParseError):
        parse_a3m("")


def test_fully_conserved_column_is_one():
    assert column_score(["A"] * 50) == 1.0


def test_twenty_distinct_is_zero():
    assert column_score(list(AMINO_ACIDS)) == 0.0


def test_aaag_hand_value():
    h = -(0.75 * math.log(0.75) + 0.25 * math.log(0.25))
    assert column_score(list("AAAG")) == pytest.approx(1 - h / math.log(20), abs=1e-12)
    assert column_score(list("AAAG")) == pytest.approx(0.8123, abs=1e-4)


def test_gaps_scale_score():
    assert column_score(list("AA--")) == pytest.approx(0.5)
    assert column_score(list("----")) == 0.0


def test_fixture_scores():
    scores = column_conservation(read_a3m(FIXTURE)).scores
    assert scores[0] == 1.0 and scores[2] == 1.0
    assert scores[1] == pytest.approx(2 / 3)
    p = np.array([2 / 3, 1 / 3])
    assert scores[4] == pytest.approx(1 + (p * np.log(p)).sum() / math.log(20))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.text(alphabet=AMINO_ACIDS + "-", min_size=6, max_size=6), min_size=2, max_size=12), st.randoms())
def test_row_permutation_invariance(rows, rnd):
    rows = ["ACDEFG"] + rows
    text = "".join(f">r{i}\n{r}\n" for i, r in enumerate(rows))
    rest = rows[1:]
    rnd.shuffle(rest)
    shuffled = "".join(f">r{i}\n{r}\n" for i, r in enumerate([rows[0]] + rest))
    a = column_conservation(parse_a3m(text)).scores
    b = column_conservation(parse_a3m(shuffled)).scores
    assert np.array_equal(a, b)
    assert np.all((a >= 0) & (a <= 1)) and len(a) == 6


def test_duplicate_row_keeps_full_conservation():
    text = ">q\nAC\n>h\nAD\n"
    assert column_conservation(parse_a3m(text + ">d\nAD\n")).scores[0] == 1.0


def test_augment_broadcasts_residue_scores():
    aug = augment_pocket(_pocket([0, 0, 0]), [0.7])
    assert aug.conservation[:, 0].tolist() == [0.7, 0.7, 0.7]
    aug = augment_pocket(_pocket([1, 0, 1, 0]), [0.2, 0.9])
    assert aug.conservation[:, 0].tolist() == [0.9, 0.2, 0.9, 0.2]


def test_augment_missing_residue():
    with pytest.raises(KeyError, match="residue 5"):
        augment_pocket(_pocket([0, 5]), [0.1, 0.2], residue_index_map={0: 0})


def test_conserved_residues_strict_threshold():
    aug = augment_pocket(_pocket([0, 1, 2]), [0.2, 0.9, 0.4])
    assert conserved_residues(aug) == {1}
    assert conserved_residues(augment_pocket(_pocket([0, 1]), [0.0, 0.0])) == set()
