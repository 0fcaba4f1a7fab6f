"""
Training the multi-reward head
==============================

Train on 150 references, then rank the candidates of 50 unseen references
and compare with BLEU-4 and ROUGE-L.
"""

from fgreward.evaluation import format_criteria, format_table
from fgreward.experiment import CorpusConfig, fit_and_evaluate, planted_split

split = planted_split("radcliq6", CorpusConfig(n_refs=200, heldout=50, seed=0))
print(len(split.train), "training records,", len(split.test), "held-out records")

result = fit_and_evaluate(split)

###############################################################################
# Loss and pair-ranking accuracy per epoch

for entry in result.log:
    print(f"epoch {entry['epoch']}: loss {entry['l_total']:.2f} "
          f"accuracy {entry['pair_accuracy']:.3f}")

###############################################################################
# Rank agreement with the planted quality

print(format_table(list(result.reports.values())))
print(format_criteria(result.reports["learned"]))
