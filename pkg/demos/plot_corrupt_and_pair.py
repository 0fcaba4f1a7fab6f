"""
Planted errors and training pairs
=================================

Rule-based edits stand in for a generator of flawed reports. Because every
edit is known, so is the score of every candidate.
"""

from fgreward.corpus import CorruptionOp, bundled_references, corrupt, generate_tiered
from fgreward.pairing import make_pairs, normalize_all
from fgreward.scoring import load_system

system = load_system("radcliq6")
reference = "There is a small left pleural effusion. The heart size is normal."

candidate, subs = corrupt(reference, [CorruptionOp("wrong_location", 0)])
print(candidate)
print({cid: int(v) for cid, v in zip(system.ids, subs)})

###############################################################################
# One candidate per quality tier for each reference

records = generate_tiered(bundled_references()[:2], system, seed=0)
for r in records:
    print(f"{r.id:<12} tier={r.tier:<5} errors={r.total:.0f}  {r.candidate_text[:60]}...")

###############################################################################
# Pairs within a reference: the better candidate is accepted. Sub-margins can
# be negative even though the total margin is always positive.

pairs = normalize_all(make_pairs(records, system), system)
for p in pairs[:3]:
    print(p.accepted.id, ">", p.rejected.id, "total", round(p.total_margin, 3),
          "per criterion", [round(v, 3) for v in p.sub_margins])
