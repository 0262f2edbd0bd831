"""Pocket / scaffold / R-group point sets and the JSON-lines dataset format.

One record per line::

    {"id": "...",                       # optional
     "pocket": {"coords": [[x, y, z], ...], "types": ["C", ...],
                "residue_id": [...],
                "residue_name": [...],  # optional, e.g. "LYS"
                "conservation": [...]}, # optional, per atom, in [0, 1]
     "scaffold": {"coords": ..., "types": ..., "anchor": i},
     "rgroup": {"coords": ..., "types": ...} | null,
     "affinity": float | null}

Coordinates are in Angstrom.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

VOCAB = ("C", "N", "O", "F", "P", "S", "Cl", "Br", "I", "H")
K = len(VOCAB)
_INDEX = {s: i for i, s in enumerate(VOCAB)}


class DatasetError(ValueError):
    """Malformed dataset record; the message carries the line number."""


def onehot_encode(symbol):
    try:
        i = _INDEX[symbol]
    except KeyError:
        raise KeyError(f"unknown element {symbol!r}; vocabulary is {', '.join(VOCAB)}") from None
    v = np.zeros(K)
    v[i] = 1.0
    return v


def onehot_decode(vec):
    """Symbol for the largest entry of ``vec`` (works on noisy continuous vectors)."""
    return VOCAB[int(np.argmax(vec))]


def encode_types(symbols):
    return np.stack([onehot_encode(s) for s in symbols]) if len(symbols) else np.zeros((0, K))


def decode_types(types):
    return [onehot_decode(row) for row in np.asarray(types)]


@dataclass(frozen=True, eq=False)
class PointSet:
    coords: np.ndarray
    types: np.ndarray
    residue_id: np.ndarray = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64).reshape(-1, 3)
        types = np.asarray(self.types, dtype=np.float64).reshape(-1, K)
        if len(coords) != len(types):
            raise ValueError(f"{len(coords)} coordinates but {len(types)} type rows")
        rid = self.residue_id
        rid = np.full(len(coords), -1, dtype=np.int64) if rid is None else np.asarray(rid, dtype=np.int64)
        if len(rid) != len(coords):
            raise ValueError("residue_id length differs from atom count")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "residue_id", rid)

    def __len__(self):
        return len(self.coords)

    @property
    def symbols(self):
        return decode_types(self.types)

    def validate(self, what="point set"):
        if len(self) < 1:
            raise ValueError(f"{what}: needs at least one atom")
        if not np.all(np.isfinite(self.coords)):
            raise ValueError(f"{what}: non-finite coordinates")
        ones = (self.types == 1.0).sum(axis=1)
        zeros = (self.types == 0.0).sum(axis=1)
        bad = np.nonzero((ones != 1) | (zeros != K - 1))[0]
        if len(bad):
            raise ValueError(f"{what}: one-hot violation in type row {int(bad[0])}")

    def translated(self, offset):
        return replace(self, coords=self.coords + np.asarray(offset))

    def transformed(self, rot, shift=0.0):
        return replace(self, coords=self.coords @ np.asarray(rot).T + shift)


@dataclass(frozen=True, eq=False)
class Pocket(PointSet):
    residue_name: tuple = None
    conservation: np.ndarray = None

    def validate(self, what="pocket"):
        super().validate(what)
        if np.any(self.residue_id < 0):
            raise ValueError(f"{what}: residue_id must be nonnegative")
        if self.residue_name is not None and len(self.residue_name) != len(self):
            raise ValueError(f"{what}: residue_name length differs from atom count")
        if self.conservation is not None:
            c = np.asarray(self.conservation)
            if c.shape != (len(self),) or np.any((c < 0) | (c > 1)):
                raise ValueError(f"{what}: conservation must be one value in [0, 1] per atom")


@dataclass(frozen=True, eq=False)
class Scaffold(PointSet):
    anchor: int = 0

    def validate(self, what="scaffold"):
        super().validate(what)
        if not (0 <= self.anchor < len(self)):
            raise ValueError(f"{what}: anchor index {self.anchor} out of range")

    @property
    def anchor_coord(self):
        return self.coords[self.anchor]


RGroup = PointSet


@dataclass(frozen=True, eq=False)
class AugmentedPocket:
    pocket: Pocket
    conservation: np.ndarray  # (N_P, 1)

    def __post_init__(self):
        c = np.asarray(self.conservation, dtype=np.float64).reshape(-1, 1)
        if len(c) != len(self.pocket):
            raise ValueError("conservation length differs from pocket atom count")
        if np.any((c < 0) | (c > 1)) or not np.all(np.isfinite(c)):
            raise ValueError("conservation entries must lie in [0, 1]")
        object.__setattr__(self, "conservation", c)

    def __len__(self):
        return len(self.pocket)

    def transformed(self, rot, shift=0.0):
        return AugmentedPocket(self.pocket.transformed(rot, shift), self.conservation)

    def translated(self, offset):
        return AugmentedPocket(self.pocket.translated(offset), self.conservation)


@dataclass(frozen=True, eq=False)
class ComplexTuple:
    pocket: Pocket
    scaffold: Scaffold
    rgroup: PointSet = None
    affinity: float = None
    id: str = None
    extra: dict = field(default_factory=dict)

    def validate(self):
        self.pocket.validate()
        self.scaffold.validate()
        if self.rgroup is not None:
            self.rgroup.validate("rgroup")

    def augmented_pocket(self):
        """Pocket with its stored per-atom conservation (zeros if absent)."""
        c = self.pocket.conservation
        if c is None:
            c = np.zeros(len(self.pocket))
        return AugmentedPocket(self.pocket, c)

    def translated(self, offset):
        return replace(
            self,
            pocket=self.pocket.translated(offset),
            scaffold=self.scaffold.translated(offset),
            rgroup=None if self.rgroup is None else self.rgroup.translated(offset),
        )

    def transformed(self, rot, shift=0.0):
        return replace(
            self,
            pocket=self.pocket.transformed(rot, shift),
            scaffold=self.scaffold.transformed(rot, shift),
            rgroup=None if self.rgroup is None else self.rgroup.transformed(rot, shift),
        )


def center_on_scaffold(tup):
    """Translate the complex so the scaffold centroid sits at the origin.

    Returns ``(centered, offset)`` where ``centered = tup - offset``.
    """
    if len(tup.scaffold) == 0:
        raise ValueError("scaffold is empty")
    offset = tup.scaffold.coords.mean(axis=0)
    return tup.translated(-offset), offset


# record (de)serialization

def _pointset_fields(d, ctx, need_residues=False):
    try:
        coords = np.asarray(d["coords"], dtype=np.float64)
        types = d["types"]
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{ctx}: bad coords/types ({exc})") from None
    if coords.ndim != 2 or coords.shape[1] != 3:
        if not (coords.size == 0 and len(types) == 0):
            raise DatasetError(f"{ctx}: coords must be a list of [x, y, z]")
        coords = coords.reshape(0, 3)
    if len(types) != len(coords):
        raise DatasetError(f"{ctx}: {len(coords)} coords but {len(types)} types")
    rows = []
    for j, s in enumerate(types):
        if isinstance(s, str):
            try:
                rows.append(onehot_encode(s))
            except KeyError as exc:
                raise DatasetError(f"{ctx}: atom {j}: {exc.args[0]}") from None
        else:
            v = np.asarray(s, dtype=np.float64)
            if v.shape != (K,) or not (np.sum(v == 1.0) == 1 and np.sum(v == 0.0) == K - 1):
                raise DatasetError(f"{ctx}: atom {j}: one-hot violation")
            rows.append(v)
    types = np.stack(rows) if rows else np.zeros((0, K))
    rid = d.get("residue_id")
    if need_residues and rid is None:
        raise DatasetError(f"{ctx}: residue_id required for pocket atoms")
    return coords, types, rid


def record_to_tuple(rec, lineno=None):
    ctx = f"line {lineno}" if lineno is not None else "record"
    if not isinstance(rec, dict) or "pocket" not in rec or "scaffold" not in rec:
        raise DatasetError(f"{ctx}: record needs 'pocket' and 'scaffold'")
    p = rec["pocket"]
    coords, types, rid = _pointset_fields(p, f"{ctx} pocket", need_residues=True)
    names = p.get("residue_name")
    cons = p.get("conservation")
    try:
        pocket = Pocket(coords, types, rid, tuple(names) if names is not None else None,
                        None if cons is None else np.asarray(cons, dtype=np.float64))
        s = rec["scaffold"]
        sc, st, _ = _pointset_fields(s, f"{ctx} scaffold")
        if "anchor" not in s:
            raise DatasetError(f"{ctx} scaffold: missing anchor")
        scaffold = Scaffold(sc, st, None, int(s["anchor"]))
        rgroup = None
        if rec.get("rgroup") is not None:
            rc, rt, _ = _pointset_fields(rec["rgroup"], f"{ctx} rgroup")
            rgroup = PointSet(rc, rt)
        aff = rec.get("affinity")
        extra = {k: v for k, v in rec.items() if k not in ("id", "pocket", "scaffold", "rgroup", "affinity")}
        tup = ComplexTuple(pocket, scaffold, rgroup, None if aff is None else float(aff), rec.get("id"), extra)
        tup.validate()
    except DatasetError:
        raise
    except ValueError as exc:
        raise DatasetError(f"{ctx}: {exc}") from None
    return tup


def _pointset_dict(ps):
    return {"coords": ps.coords.tolist(), "types": ps.symbols}


def tuple_to_record(tup):
    pocket = _pointset_dict(tup.pocket)
    pocket["residue_id"] = tup.pocket.residue_id.tolist()
    if tup.pocket.residue_name is not None:
        pocket["residue_name"] = list(tup.pocket.residue_name)
    if tup.pocket.conservation is not None:
        pocket["conservation"] = np.asarray(tup.pocket.conservation).tolist()
    scaffold = _pointset_dict(tup.scaffold)
    scaffold["anchor"] = int(tup.scaffold.anchor)
    rec = {}
    if tup.id is not None:
        rec["id"] = tup.id
    rec.update({
        "pocket": pocket,
        "scaffold": scaffold,
        "rgroup": None if tup.rgroup is None else _pointset_dict(tup.rgroup),
        "affinity": tup.affinity,
    })
    rec.update(tup.extra)
    return rec


def load_dataset(path):
    tuples = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: parse error: {exc.msg}") from None
            tuples.append(record_to_tuple(rec, lineno))
    return tuples


def save_dataset(path, tuples):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for tup in tuples:
            fh.write(json.dumps(tuple_to_record(tup)) + "\n")
