"""
Two ways to score a report
==========================

A six-category system counts errors, a seven-item system subtracts weighted
penalties from 100. Both are mapped to a common "higher is better" quality.
"""

import numpy as np

from fgreward.scoring import load_system, quality_score, total_score

counts = load_system("radcliq6")
weighted = load_system("mrscore7")

for system in (counts, weighted):
    print(system.name, system.formula, system.orientation, system.quality_range)
    for c in system.criteria:
        print(f"  {c.id:<24} weight {c.weight:>5}")

###############################################################################
# The same report, judged by each system

subs = [1, 2, 0, 0, 1, 0]
print("errors:", total_score(counts, subs), "quality:", quality_score(counts, subs))

flags = [1, 0, 0, 1, 0, 0, 0]
print("weighted total:", total_score(weighted, flags))

###############################################################################
# Every added error lowers quality, whichever system is used

rng = np.random.default_rng(0)
for _ in range(3):
    s = rng.integers(0, 2, size=7)
    worse = s.copy()
    worse[np.flatnonzero(s == 0)[:1]] = 1
    print(quality_score(weighted, s), "->", quality_score(weighted, worse))
