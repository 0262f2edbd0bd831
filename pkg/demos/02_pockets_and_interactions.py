"""Conservation scores from an alignment, then contacts in a synthetic pocket.

Run with ``python3 demos/02_pockets_and_interactions.py``.
"""

import numpy as np

from scaffdiff import metrics
from scaffdiff.conservation import augment_pocket, column_conservation, column_score, parse_a3m
from scaffdiff.synthetic import make_dataset

# Single columns first. Identical residues score one, all twenty score zero.
print("LLLL :", column_score(list("LLLL")))
print("AAAG :", round(column_score(list("AAAG")), 4))
print("20 aa:", column_score(list("ACDEFGHIKLMNPQRSTVWY")))
print("AA-- :", round(column_score(list("AA--")), 4), "(gaps scale the score down)")

# Lowercase letters are insertions and drop out of the alignment.
msa = parse_a3m(">query\nMKTAY\n>hit1\nMKsTAF\n>hit2\nM-Ta-Y\n")
print("rows:", msa.rows)
print("scores:", np.round(column_conservation(msa).scores, 3))

# The synthetic generator ships an alignment with every complex.
tuples, a3ms = make_dataset(2, seed=3)
tup = tuples[0]
track = column_conservation(parse_a3m(a3ms[tup.id]))
aug = augment_pocket(tup.pocket, track)
print(f"\n{tup.id}: {len(tup.pocket)} pocket atoms, {len(tup.scaffold)} scaffold atoms, "
      f"{len(tup.rgroup)} R-group atoms")
print("residues above 0.4:", sorted({int(r) for r, s in zip(aug.pocket.residue_id, aug.conservation[:, 0])
                                     if s > 0.4}))

# Contacts between the whole ligand and the pocket.
lig = metrics.assemble(tup.scaffold, tup.rgroup)
for rec in metrics.detect_interactions(aug, lig):
    flag = "conserved" if rec.conserved else ""
    print(f"  {rec.kind:11s} ligand {rec.ligand_index:2d}  pocket {rec.pocket_index:2d}  "
          f"residue {rec.residue_id:2d}  {rec.distance:.2f} A  {flag}")

mean, counts = metrics.conserved_interaction_stats(aug, [lig])
print("conserved contacts:", counts[0])
print("valid:", metrics.is_valid(lig, tup.scaffold), " failures:", metrics.validity_failures(lig, tup.scaffold))
