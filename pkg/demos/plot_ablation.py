"""
Which loss terms matter
=======================

Train with only the total-margin term, only the per-criterion term, or
both, and sweep the weight between them.
"""

from fgreward.experiment import CorpusConfig, ablate, format_ablation, planted_split

split = planted_split("radcliq6", CorpusConfig(n_refs=200, heldout=50, seed=0))
rows = ablate(split, "both")
print(format_ablation(rows))
