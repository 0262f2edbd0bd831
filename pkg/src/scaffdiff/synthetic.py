"""Toy pocket/scaffold/R-group complexes with chemically sane geometry.

Scaffolds are a six-membered carbon ring with one optional heteroatom
substituent; the R-group is a short zig-zag chain
grown from a ring carbon. Pocket atoms are grouped into residues placed on
a shell around the ligand. Every generated ligand passes the validity rules
in ``scaffdiff.metrics``.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from scipy.spatial.transform import Rotation

from .conservation import AMINO_ACIDS
from .domain import ComplexTuple, Pocket, PointSet, Scaffold, encode_types
from .numerics import Rng

RING_BOND = 1.39
SINGLE_BOND = 1.50
RESIDUES = ("LYS", "ARG", "ASP", "GLU", "SER", "THR", "LEU", "PHE", "VAL", "ASN")
_RES_ELEMENTS = {
    "LYS": "CCCN", "ARG": "CCNN", "ASP": "CCOO", "GLU": "CCOO", "SER": "CCO",
    "THR": "CCCO", "LEU": "CCCC", "PHE": "CCCCC", "VAL": "CCC", "ASN": "CCON",
}
_ONE_LETTER = {"LYS": "K", "ARG": "R", "ASP": "D", "GLU": "E", "SER": "S",
               "THR": "T", "LEU": "L", "PHE": "F", "VAL": "V", "ASN": "N"}


def _ring(n=6, bond=RING_BOND):
    radius = bond / (2 * np.sin(np.pi / n))
    ang = 2 * np.pi * np.arange(n) / n
    return np.stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(n)], axis=1)


def make_scaffold(rng):
    coords = _ring()
    symbols = ["C"] * 6
    if rng.uniform() < 0.5:
        # para heteroatom substituent opposite the anchor (atom 0)
        sub = rng.choice(["O", "N", "F"])
        coords = np.concatenate([coords, coords[3:4] * (1 + SINGLE_BOND / np.linalg.norm(coords[3]))])
        symbols.append(str(sub))
    return coords, symbols, 0


def make_rgroup(rng, scaffold_coords, anchor, n_atoms):
    """Zig-zag chain in the ring plane, grown radially from the anchor."""
    a = scaffold_coords[anchor]
    out = a / np.linalg.norm(a)
    side = np.cross([0.0, 0.0, 1.0], out)
    half = np.deg2rad(109.5 / 2)
    coords = [a + SINGLE_BOND * out]
    sign = 1.0
    for _ in range(1, n_atoms):
        # zig-zag: alternate the sideways component, keep growing outward
        d = np.cos(half) * side * sign + np.sin(half) * out
        coords.append(coords[-1] + SINGLE_BOND * d)
        sign = -sign
    coords = np.array(coords)
    # small out-of-plane tilt so chains differ between tuples
    tilt = Rotation.from_rotvec(side * rng.uniform(-0.35, 0.35)).as_matrix()
    coords = (coords - a) @ tilt.T + a
    symbols = []
    for i in range(n_atoms):
        terminal = i == n_atoms - 1
        pool = ["C", "C", "N", "O"] + (["F", "Cl"] if terminal else [])
        symbols.append(str(rng.choice(pool)))
    return coords, symbols


def make_pocket(rng, ligand, n_target=30, shell=(2.8, 6.0)):
    """Residues of 3-5 atoms placed on a shell around the ligand atoms."""
    coords, symbols, res_ids, res_names = [], [], [], []
    rid = 0
    tries = 0
    center = ligand.mean(axis=0)
    while len(coords) < n_target and tries < 5000:
        tries += 1
        name = str(rng.choice(RESIDUES))
        elems = _RES_ELEMENTS[name]
        direction = rng.normal(3)
        direction /= np.linalg.norm(direction)
        base = center + direction * rng.uniform(4.0, 8.0)
        atoms = [base]
        for _ in range(len(elems) - 1):
            v = rng.normal(3)
            atoms.append(atoms[-1] + 1.45 * v / np.linalg.norm(v))
        atoms = np.array(atoms)
        dl = np.sqrt(((atoms[:, None] - ligand[None]) ** 2).sum(-1)).min()
        if dl < shell[0] or dl > shell[1]:
            continue
        if coords:
            dp = np.sqrt(((atoms[:, None] - np.array(coords)[None]) ** 2).sum(-1)).min()
            if dp < 2.2:
                continue
        coords.extend(atoms)
        symbols.extend(elems)
        res_ids.extend([rid] * len(elems))
        res_names.extend([name] * len(elems))
        rid += 1
    return np.array(coords), symbols, res_ids, res_names


def affinity_label(pocket_xyz, ligand_xyz, n_r):
    d = np.sqrt(((ligand_xyz[:, None] - pocket_xyz[None]) ** 2).sum(-1))
    contacts = float((d < 4.5).sum())
    return -4.0 - 0.15 * contacts - 0.3 * n_r


def make_complex(rng, n_rgroup=None, n_pocket=30, rigid=True, id=None):
    xs, ss, anchor = make_scaffold(rng)
    if n_rgroup is None:
        n_rgroup = int(rng.integers(3, 7))
    xr, sr = make_rgroup(rng, xs, anchor, n_rgroup)
    xp, sp, rid, rname = make_pocket(rng, np.concatenate([xs, xr]), n_pocket)
    aff = affinity_label(xp, np.concatenate([xs, xr]), n_rgroup)
    if rigid:
        rot = Rotation.random(random_state=int(rng.integers(0, 2**31 - 1))).as_matrix()
        shift = rng.uniform(-10, 10, size=3)
        xs, xr, xp = (x @ rot.T + shift for x in (xs, xr, xp))
    pocket = Pocket(xp, encode_types(sp), np.array(rid), tuple(rname))
    scaffold = Scaffold(xs, encode_types(ss), None, anchor)
    rgroup = PointSet(xr, encode_types(sr))
    return ComplexTuple(pocket, scaffold, rgroup, aff, id)


def make_a3m(rng, residue_names, n_rows=40, conserved=None):
    """Alignment whose query is the pocket's residue sequence.

    ``conserved`` holds a per-residue probability that a homolog keeps the
    query letter; other positions are random letters or gaps. Lowercase
    insertions are sprinkled in to exercise the A3M convention.
    """
    query = "".join(_ONE_LETTER[n] for n in residue_names)
    if conserved is None:
        conserved = rng.uniform(0.0, 1.0, size=len(query))
    lines = [">query", query]
    for r in range(n_rows - 1):
        row = []
        for j, q in enumerate(query):
            u = rng.uniform()
            if u < conserved[j]:
                row.append(q)
            elif u < conserved[j] + 0.1 * (1 - conserved[j]):
                row.append("-")
            else:
                row.append(str(rng.choice(list(AMINO_ACIDS))))
            if rng.uniform() < 0.03:
                row.append(str(rng.choice(list(AMINO_ACIDS))).lower())
        lines.append(f">hit{r}")
        lines.append("".join(row))
    return "\n".join(lines) + "\n"


def residue_names_in_order(pocket):
    names = {}
    for rid, name in zip(pocket.residue_id, pocket.residue_name):
        names.setdefault(int(rid), name)
    return [names[k] for k in sorted(names)]


def make_dataset(n, seed=0, n_pocket=30, with_conservation=True, rgroup_sizes=(3, 6)):
    """``n`` complexes plus one A3M text per complex (keyed by id)."""
    from .conservation import augment_pocket, column_conservation, parse_a3m

    rng = Rng.from_seed(seed)
    tuples, a3ms = [], {}
    for i in range(n):
        sub = rng.split(1)[0]
        n_r = int(sub.integers(rgroup_sizes[0], rgroup_sizes[1] + 1))
        tup = make_complex(sub, n_rgroup=n_r, n_pocket=n_pocket, id=f"cplx{i:03d}")
        text = make_a3m(sub, residue_names_in_order(tup.pocket))
        a3ms[tup.id] = text
        if with_conservation:
            aug = augment_pocket(tup.pocket, column_conservation(parse_a3m(text)))
            tup = replace(tup, pocket=replace(tup.pocket, conservation=aug.conservation[:, 0]))
        tuples.append(tup)
    return tuples, a3ms
