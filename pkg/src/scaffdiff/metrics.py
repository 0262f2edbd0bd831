"""Hermetic evaluation: validity, uniqueness, interactions, model comparison.

Bonds are inferred from covalent radii, interactions from distance rules.
Nothing here needs a cheminformatics toolkit or a docking program.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .conservation import CONSERVED_THRESHOLD
from .domain import AugmentedPocket, PointSet

log = logging.getLogger(__name__)

COVALENT_RADIUS = {
    "H": 0.31, "C": 0.76, "N": 0.71, "O": 0.66, "F": 0.57,
    "P": 1.07, "S": 1.05, "Cl": 1.02, "Br": 1.20, "I": 1.39,
}
MAX_VALENCE = {"C": 4, "N": 3, "O": 2, "H": 1, "F": 1, "Cl": 1, "Br": 1, "I": 1, "S": 6, "P": 5}
BOND_TOLERANCE = 0.4
CLASH_DISTANCE = 0.8
ANCHOR_BOND = (0.9, 2.0)

HBOND_CUTOFF = 3.5
HYDROPHOBIC_CUTOFF = 4.0
SALTBRIDGE_CUTOFF = 4.0
CATION_RESIDUES = ("LYS", "ARG")
ANION_RESIDUES = ("ASP", "GLU")
KINDS = ("hbond", "hydrophobic", "saltbridge")
CUTOFFS = {"hbond": HBOND_CUTOFF, "hydrophobic": HYDROPHOBIC_CUTOFF, "saltbridge": SALTBRIDGE_CUTOFF}


class MetricsError(ValueError):
    pass


# bond graph

def infer_bonds(coords, symbols, tolerance=BOND_TOLERANCE):
    """Pairs ``(i, j)``, ``i < j``, whose distance is within ``tolerance``
    of the sum of covalent radii."""
    coords = np.asarray(coords, dtype=np.float64)
    n = len(coords)
    if n < 2:
        return []
    radii = np.array([COVALENT_RADIUS[s] for s in symbols])
    d = np.sqrt(((coords[:, None] - coords[None]) ** 2).sum(-1))
    ref = radii[:, None] + radii[None, :]
    ok = np.abs(d - ref) <= tolerance
    i, j = np.nonzero(np.triu(ok, k=1))
    return list(zip(i.tolist(), j.tolist()))


def _adjacency(n, bonds):
    adj = [[] for _ in range(n)]
    for i, j in bonds:
        adj[i].append(j)
        adj[j].append(i)
    return adj


def _component(adj, start):
    seen = {start}
    stack = [start]
    while stack:
        for j in adj[stack.pop()]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return seen


def assemble(scaffold, rgroup):
    """Ligand point set: scaffold atoms first, then the R-group."""
    return PointSet(np.concatenate([scaffold.coords, rgroup.coords]),
                    np.concatenate([scaffold.types, rgroup.types]))


# validity

def validity_failures(molecule, scaffold):
    """Names of the violated rules (empty list means valid).

    ``molecule`` holds the scaffold atoms first, in scaffold order, then the
    R-group atoms.
    """
    n_s = len(scaffold)
    sym = molecule.symbols
    coords = molecule.coords
    failed = []
    if (len(molecule) < n_s or sym[:n_s] != scaffold.symbols
            or not np.allclose(coords[:n_s], scaffold.coords, atol=1e-6)):
        return ["scaffold"]
    if len(molecule) == n_s:
        return ["anchor"]
    if not np.all(np.isfinite(coords)):
        return ["clash"]
    d_anchor = np.linalg.norm(coords[n_s:] - coords[scaffold.anchor], axis=1)
    if not np.any((d_anchor >= ANCHOR_BOND[0]) & (d_anchor <= ANCHOR_BOND[1])):
        failed.append("anchor")
    bonds = infer_bonds(coords, sym)
    adj = _adjacency(len(molecule), bonds)
    if len(_component(adj, scaffold.anchor)) != len(molecule):
        failed.append("connectivity")
    if len(molecule) > 1:
        d = np.sqrt(((coords[:, None] - coords[None]) ** 2).sum(-1))
        if np.any(d[np.triu_indices(len(molecule), k=1)] < CLASH_DISTANCE):
            failed.append("clash")
    if any(len(adj[i]) > MAX_VALENCE[s] for i, s in enumerate(sym)):
        failed.append("valence")
    return failed


def is_valid(molecule, scaffold):
    return not validity_failures(molecule, scaffold)


def validity(molecules, scaffold):
    """Fraction of ``molecules`` passing every structural rule."""
    molecules = list(molecules)
    if not molecules:
        log.warning("validity of an empty molecule list is defined as 0.0")
        return 0.0
    return sum(is_valid(m, scaffold) for m in molecules) / len(molecules)


# canonical labeling

def _refine(colors, adj):
    """Colour refinement to a stable partition. Colours are ranks, so the
    result does not depend on the input atom order."""
    n = len(colors)
    while True:
        sig = [(colors[i], tuple(sorted(colors[j] for j in adj[i]))) for i in range(n)]
        rank = {s: r for r, s in enumerate(sorted(set(sig)))}
        new = [rank[s] for s in sig]
        if len(set(new)) == len(set(colors)):
            return new
        colors = new


def _certificate(order, labels, adj):
    pos = {v: k for k, v in enumerate(order)}
    edges = sorted(tuple(sorted((pos[i], pos[j]))) for i in order for j in adj[i] if pos[i] < pos[j])
    return (tuple(labels[v] for v in order), tuple(edges))


def canonical_form(symbols, bonds):
    """Canonical ``(labels, edges)`` of a labeled graph.

    Individualisation-refinement: refine colours, split the first smallest
    non-singleton cell on each of its members in turn, recurse, and keep the
    lexicographically least certificate among the leaves.
    """
    n = len(symbols)
    adj = _adjacency(n, bonds)
    labels = list(symbols)
    elem_rank = {s: r for r, s in enumerate(sorted(set(labels)))}
    start = _refine([elem_rank[s] for s in labels], adj)
    best = None

    def search(colors):
        nonlocal best
        cells = {}
        for v, c in enumerate(colors):
            cells.setdefault(c, []).append(v)
        open_cells = [cell for cell in cells.values() if len(cell) > 1]
        if not open_cells:
            order = sorted(range(n), key=lambda v: colors[v])
            cert = _certificate(order, labels, adj)
            if best is None or cert < best:
                best = cert
            return
        target = min(open_cells, key=lambda cell: (len(cell), colors[cell[0]]))
        for v in target:
            # individualise v: give it a colour just below its cell
            split = [2 * c + 1 for c in colors]
            split[v] -= 1
            search(_refine(split, adj))

    search(start)
    return best


def canonical_hash(symbols, bonds):
    labels, edges = canonical_form(symbols, bonds)
    text = ",".join(labels) + "|" + ";".join(f"{i}-{j}" for i, j in edges)
    return hashlib.sha256(text.encode()).hexdigest()


def molecule_hash(molecule):
    sym = molecule.symbols
    return canonical_hash(sym, infer_bonds(molecule.coords, sym))


def uniqueness(molecules):
    """Distinct bond graphs over the number of molecules."""
    molecules = list(molecules)
    if not molecules:
        raise MetricsError("uniqueness of an empty molecule list is undefined")
    return len({molecule_hash(m) for m in molecules}) / len(molecules)


# interactions

@dataclass(frozen=True)
class InteractionRecord:
    kind: str
    ligand_index: int
    pocket_index: int
    residue_id: int
    distance: float
    conserved: bool = False

    def key(self):
        return (self.kind, self.ligand_index, self.pocket_index)


def _charged_ligand_atoms(symbols, bonds):
    """Terminal N atoms (cation-like) and O atoms of carboxylate-like groups."""
    adj = _adjacency(len(symbols), bonds)
    cations = {i for i, s in enumerate(symbols) if s == "N" and len(adj[i]) == 1}
    anions = set()
    for i, s in enumerate(symbols):
        if s != "C":
            continue
        oxygens = [j for j in adj[i] if symbols[j] == "O"]
        if len(oxygens) >= 2:
            anions.update(oxygens)
    return cations, anions


def _pocket_parts(pocket):
    if isinstance(pocket, AugmentedPocket):
        return pocket.pocket, pocket.conservation[:, 0]
    cons = None if pocket.conservation is None else np.asarray(pocket.conservation, dtype=np.float64)
    return pocket, cons


def _pair_kinds(lsym, psym, l_charge, p_charge):
    kinds = []
    if lsym in ("N", "O") and psym in ("N", "O"):
        kinds.append("hbond")
    if lsym == "C" and psym == "C":
        kinds.append("hydrophobic")
    if (l_charge, p_charge) in (("+", "-"), ("-", "+")):
        kinds.append("saltbridge")
    return kinds


def _charges(pocket, molecule):
    psym = pocket.symbols
    names = pocket.residue_name
    p_charge = [None] * len(pocket)
    if names is not None:
        for i, (s, name) in enumerate(zip(psym, names)):
            if s == "N" and name in CATION_RESIDUES:
                p_charge[i] = "+"
            elif s == "O" and name in ANION_RESIDUES:
                p_charge[i] = "-"
    lsym = molecule.symbols
    cations, anions = _charged_ligand_atoms(lsym, infer_bonds(molecule.coords, lsym))
    l_charge = ["+" if i in cations else "-" if i in anions else None for i in range(len(molecule))]
    return l_charge, p_charge


def _record(kind, i, j, pocket, cons, d, threshold):
    conserved = bool(cons is not None and cons[j] > threshold)
    return InteractionRecord(kind, int(i), int(j), int(pocket.residue_id[j]), float(d), conserved)


def detect_interactions(pocket, molecule, ligand_atoms=None, threshold=CONSERVED_THRESHOLD):
    """Geometric non-covalent contacts between ``molecule`` and ``pocket``.

    ``pocket`` may be a ``Pocket`` or an ``AugmentedPocket``; the conserved
    flag needs conservation scores (strictly above ``threshold``). Salt
    bridges need pocket residue names. ``ligand_atoms`` restricts which
    ligand indices are reported; charges are still inferred on the whole
    molecule. Records are ordered by ligand index, pocket index, kind.
    """
    pocket, cons = _pocket_parts(pocket)
    lsym, psym = molecule.symbols, pocket.symbols
    l_charge, p_charge = _charges(pocket, molecule)
    allowed = None if ligand_atoms is None else set(int(i) for i in ligand_atoms)
    tree_l = cKDTree(molecule.coords)
    tree_p = cKDTree(pocket.coords)
    cutoff = max(CUTOFFS.values())
    pairs = tree_l.sparse_distance_matrix(tree_p, cutoff, output_type="ndarray")
    out = []
    for i, j, _ in sorted(pairs.tolist()):
        i, j = int(i), int(j)
        if allowed is not None and i not in allowed:
            continue
        d = float(np.linalg.norm(molecule.coords[i] - pocket.coords[j]))
        if d <= 0.0:
            continue
        for kind in _pair_kinds(lsym[i], psym[j], l_charge[i], p_charge[j]):
            if d <= CUTOFFS[kind]:
                out.append(_record(kind, i, j, pocket, cons, d, threshold))
    return out


def brute_force_interactions(pocket, molecule, threshold=CONSERVED_THRESHOLD):
    """All-pairs reference scan for ``detect_interactions``."""
    pocket, cons = _pocket_parts(pocket)
    lsym, psym = molecule.symbols, pocket.symbols
    l_charge, p_charge = _charges(pocket, molecule)
    out = []
    for i in range(len(molecule)):
        for j in range(len(pocket)):
            d = float(np.linalg.norm(molecule.coords[i] - pocket.coords[j]))
            for kind in _pair_kinds(lsym[i], psym[j], l_charge[i], p_charge[j]):
                if 0.0 < d <= CUTOFFS[kind]:
                    out.append(_record(kind, i, j, pocket, cons, d, threshold))
    return out


def conserved_interaction_stats(aug_pocket, molecules, threshold=CONSERVED_THRESHOLD):
    """Mean and per-molecule counts of interactions with conserved residues."""
    if not isinstance(aug_pocket, AugmentedPocket):
        raise MetricsError("conserved interaction counts need an augmented pocket")
    counts = []
    for mol in molecules:
        if isinstance(mol, tuple):
            mol, atoms = mol
        else:
            atoms = None
        recs = detect_interactions(aug_pocket, mol, atoms, threshold)
        counts.append(sum(r.conserved for r in recs))
    mean = float(np.mean(counts)) if counts else 0.0
    return mean, counts


# reports

@dataclass
class PocketReport:
    n_molecules: int
    validity: float
    uniqueness: float
    mean_interactions: float
    mean_conserved_interactions: float

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class EvalReport:
    validity: float
    uniqueness: float
    mean_interactions: float
    mean_conserved_interactions: float
    per_pocket: dict = field(default_factory=dict)

    def as_dict(self):
        out = {k: v for k, v in self.__dict__.items() if k != "per_pocket"}
        out["per_pocket"] = {k: v.as_dict() for k, v in sorted(self.per_pocket.items())}
        return out

    @classmethod
    def from_dict(cls, d):
        per = {k: PocketReport(**v) for k, v in d.get("per_pocket", {}).items()}
        return cls(d["validity"], d["uniqueness"], d["mean_interactions"], d["mean_conserved_interactions"], per)


def evaluate(tuples, generated, threshold=CONSERVED_THRESHOLD):
    """Score generated R-groups.

    ``generated`` maps a tuple id to its list of R-group point sets. Each
    R-group is attached to the tuple's scaffold for validity and bond
    inference; interactions are counted for R-group atoms only. Overall
    fractions pool all molecules, interaction means are per molecule.
    """
    by_id = {t.id: t for t in tuples}
    missing = sorted(set(generated) - set(by_id))
    if missing:
        raise MetricsError(f"generated R-groups for unknown pocket ids: {missing}")
    per = {}
    n_valid = n_total = 0
    all_hashes = []
    inter, cons_counts = [], []
    for pid in sorted(generated):
        tup = by_id[pid]
        aug = tup.augmented_pocket()
        n_s = len(tup.scaffold)
        ligands = [assemble(tup.scaffold, rg) for rg in generated[pid]]
        if not ligands:
            continue
        valid = [is_valid(m, tup.scaffold) for m in ligands]
        hashes = [molecule_hash(m) for m in ligands]
        recs = [detect_interactions(aug, m, range(n_s, len(m)), threshold) for m in ligands]
        n_int = [len(r) for r in recs]
        n_con = [sum(x.conserved for x in r) for r in recs]
        per[pid] = PocketReport(len(ligands), sum(valid) / len(ligands), len(set(hashes)) / len(ligands),
                                float(np.mean(n_int)), float(np.mean(n_con)))
        n_valid += sum(valid)
        n_total += len(ligands)
        # ids make identical R-groups in different pockets count as distinct
        all_hashes.extend((pid, h) for h in hashes)
        inter.extend(n_int)
        cons_counts.extend(n_con)
    if n_total == 0:
        log.warning("no generated molecules; fractions are reported as 0.0")
        return EvalReport(0.0, 0.0, 0.0, 0.0, per)
    return EvalReport(n_valid / n_total, len(set(all_hashes)) / n_total,
                      float(np.mean(inter)), float(np.mean(cons_counts)), per)


COMPARED = ("validity", "uniqueness", "mean_interactions", "mean_conserved_interactions")


def compare_models(a, b, metrics=COMPARED):
    """Per metric, the fraction of pockets where A beats B, B beats A, or
    they tie. The three fractions sum to one."""
    if set(a.per_pocket) != set(b.per_pocket):
        raise MetricsError("reports cover different pocket sets")
    if not a.per_pocket:
        raise MetricsError("reports have no pockets")
    ids = sorted(a.per_pocket)
    n = len(ids)
    out = {}
    for name in metrics:
        wins = sum(getattr(a.per_pocket[i], name) > getattr(b.per_pocket[i], name) for i in ids)
        losses = sum(getattr(a.per_pocket[i], name) < getattr(b.per_pocket[i], name) for i in ids)
        a_wins, b_wins = wins / n, losses / n
        # the complement makes a_wins + b_wins + ties round to exactly 1.0
        out[name] = {"a_wins": a_wins, "b_wins": b_wins, "ties": 1.0 - (a_wins + b_wins)}
    return out


# pose comparison

def matched_rmsd(a, b, match_types=True):
    """RMSD after the optimal one-to-one atom assignment.

    Atom order carries no meaning for generated point sets, so atoms are
    paired by a minimum-cost assignment on squared distances. With
    ``match_types`` pairs of different elements cost extra and only win
    when nothing else is left.
    """
    if len(a) != len(b):
        return float("inf")
    if len(a) == 0:
        return 0.0
    cost = ((a.coords[:, None] - b.coords[None]) ** 2).sum(-1)
    if match_types:
        same = np.array(a.symbols)[:, None] == np.array(b.symbols)[None, :]
        cost = cost + np.where(same, 0.0, 1e6)
    rows, cols = linear_sum_assignment(cost)
    d2 = ((a.coords[rows] - b.coords[cols]) ** 2).sum(-1)
    return float(np.sqrt(d2.mean()))
