"""A3M alignments, per-column conservation and conservation-augmented pockets."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .domain import AugmentedPocket

AMINO_ACIDS = "ACDEFGHIKLMNPQRSTVWY"
GAP = "-"
_ALLOWED = set(AMINO_ACIDS) | {GAP}
# ambiguous residue codes are folded onto a canonical letter
_FOLD = {"B": "D", "Z": "E", "J": "L", "U": "C", "O": "K", "X": GAP, ".": GAP}
LN20 = math.log(20.0)
CONSERVED_THRESHOLD = 0.4


class A3mParseError(ValueError):
    pass


@dataclass(frozen=True)
class Msa:
    names: tuple
    rows: tuple  # equal-length strings, row 0 is the query

    @property
    def query(self):
        return self.rows[0].replace(GAP, "")

    @property
    def n_columns(self):
        return len(self.rows[0])

    def column(self, j):
        return [r[j] for r in self.rows]

    def to_a3m(self):
        return "".join(f">{n}\n{r}\n" for n, r in zip(self.names, self.rows))


@dataclass(frozen=True)
class ConservationTrack:
    scores: np.ndarray

    def __len__(self):
        return len(self.scores)

    def write(self, path):
        with open(path, "w") as fh:
            for i, s in enumerate(self.scores):
                fh.write(f"{i} {s:.6f}\n")


def parse_a3m(text):
    """Parse A3M text into an ``Msa`` aligned to the query columns.

    Lowercase letters are insertions relative to the query and are dropped;
    ``.`` is treated as a gap. Query columns that are gaps are removed from
    every row, so the result has one column per query residue.
    """
    names, seqs = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith(">"):
            names.append(line[1:].strip())
            seqs.append([])
            continue
        if not names:
            names.append("query")
            seqs.append([])
        seqs[-1].append((lineno, line))
    if not names:
        raise A3mParseError("empty alignment")

    rows = []
    for r, chunks in enumerate(seqs):
        out = []
        for lineno, line in chunks:
            for col, ch in enumerate(line, start=1):
                if ch.islower():
                    continue
                ch = _FOLD.get(ch, ch)
                if ch not in _ALLOWED:
                    raise A3mParseError(f"row {r} (line {lineno}, col {col}): illegal character {ch!r}")
                out.append(ch)
        rows.append("".join(out))

    width = len(rows[0])
    if width == 0:
        raise A3mParseError("query sequence is empty")
    for r, row in enumerate(rows):
        if len(row) != width:
            raise A3mParseError(f"row {r} ({names[r]!r}): length {len(row)} != query length {width}")

    keep = [j for j, ch in enumerate(rows[0]) if ch != GAP]
    if len(keep) != width:
        rows = ["".join(row[j] for j in keep) for row in rows]
    return Msa(tuple(names), tuple(rows))


def read_a3m(path):
    with open(path) as fh:
        return parse_a3m(fh.read())


def column_score(column):
    """``(1 - H / ln 20) * (1 - gap fraction)`` for one alignment column.

    ``H`` is the Shannon entropy (natural log) of the residue distribution
    with gaps excluded. An all-gap column scores 0.
    """
    n = len(column)
    counts = Counter(ch for ch in column if ch != GAP)
    n_res = sum(counts.values())
    if n_res == 0:
        return 0.0
    # H = ln n - sum(c ln c) / n keeps the uniform and single-letter cases exact
    if len(counts) == 1:
        h = 0.0
    else:
        h = math.log(n_res) - math.fsum(c * math.log(c) for c in counts.values()) / n_res
    score = (1.0 - h / LN20) * (n_res / n)
    return min(1.0, max(0.0, score))


def column_conservation(msa):
    scores = np.array([column_score(msa.column(j)) for j in range(msa.n_columns)])
    return ConservationTrack(scores)


def augment_pocket(pocket, track, residue_index_map=None):
    """Broadcast residue scores onto pocket atoms.

    ``residue_index_map`` maps ``residue_id -> track index``; by default the
    residue id is used as the (0-based) query position.
    """
    scores = np.asarray(track.scores if isinstance(track, ConservationTrack) else track, dtype=np.float64)
    per_atom = np.empty(len(pocket))
    for a, rid in enumerate(pocket.residue_id):
        rid = int(rid)
        idx = residue_index_map.get(rid) if residue_index_map is not None else rid
        if idx is None or not (0 <= idx < len(scores)):
            raise KeyError(f"residue {rid} has no conservation score")
        per_atom[a] = scores[idx]
    return AugmentedPocket(pocket, per_atom)


def conserved_residues(aug, threshold=CONSERVED_THRESHOLD):
    """Residue ids whose score is strictly above ``threshold``."""
    c = aug.conservation[:, 0]
    return {int(r) for r, s in zip(aug.pocket.residue_id, c) if s > threshold}
