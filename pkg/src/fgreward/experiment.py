"""End-to-end runs on a planted-ranking corpus.

A planted corpus is generated from synthetic references, so the true
quality of every candidate is known. The references are split into a
training part (paired and used for training) and a held-out part whose
records are scored by the learned model and by the baseline metrics.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .corpus import ReportRecord, generate_tiered, synthesize_references
from .evaluation import BASELINES, EvalReport, evaluate_metric
from .features import FeatureSpec
from .model import RewardModel, init_model, score_many
from .pairing import make_pairs, normalize_all
from .scoring import ScoringSystem, load_system
from .train import TrainConfig, train

LAMBDA_GRID = (0.5, 0.8, 1.0, 1.2, 2.0, 3.0)
TERM_GRID = {"tot_only": (False, True), "ind_only": (True, False), "both": (True, True)}


@dataclass(frozen=True)
class CorpusConfig:
    n_refs: int = 200
    heldout: int = 50
    seed: int = 0
    paraphrase_rate: float = 0.3


@dataclass
class Split:
    system: ScoringSystem
    train: list
    test: list


@dataclass
class RunResult:
    model: RewardModel
    log: list
    reports: dict = field(default_factory=dict)

    def tau(self, name="learned") -> float:
        return self.reports[name].kendall_tau


def planted_split(system: ScoringSystem | str = "radcliq6",
                  corpus: CorpusConfig = CorpusConfig()) -> Split:
    if isinstance(system, str):
        system = load_system(system)
    refs = synthesize_references(corpus.n_refs, seed=corpus.seed)
    items = [(f"ref{k:04d}", text) for k, text in enumerate(refs)]
    records = generate_tiered(items, system, seed=corpus.seed,
                              paraphrase_rate=corpus.paraphrase_rate)
    cut = corpus.n_refs - corpus.heldout
    train_ids = {rid for rid, _ in items[:cut]}
    return Split(system,
                 [r for r in records if r.reference_id in train_ids],
                 [r for r in records if r.reference_id not in train_ids])


def learned_scores(model: RewardModel, records: list[ReportRecord]) -> np.ndarray:
    """Per-criterion reward matrix for ``records``."""
    return score_many(model, [(r.reference_text, r.candidate_text, r.id) for r in records])


def baseline_scores(name: str, records: list[ReportRecord]) -> np.ndarray:
    fn = BASELINES[name]
    return np.array([fn(r.reference_text, r.candidate_text) for r in records])


def fit_and_evaluate(split: Split, spec: FeatureSpec = FeatureSpec(),
                     config: TrainConfig = TrainConfig(), arch: str = "linear",
                     hidden: int = 0, init_seed: int = 0,
                     baselines=("bleu4", "rouge_l")) -> RunResult:
    """Train on ``split.train`` and correlate every metric with planted quality on ``split.test``."""
    system = split.system
    pairs = normalize_all(make_pairs(split.train, system), system)
    model = init_model(spec, system.n, system.name, arch, hidden, seed=init_seed)
    result = train(pairs, model, config)
    human = np.array([r.quality for r in split.test])
    R = learned_scores(result.model, split.test)
    sub_truth = np.array([r.subs for r in split.test])
    per_crit = {}
    for j, c in enumerate(system.criteria):
        # rewards are in quality orientation, errors are not
        per_crit[c.id] = (R[:, j], -sub_truth[:, j])
    reports = {"learned": evaluate_metric(R.sum(axis=1), human, "learned", per_crit)}
    for name in baselines:
        reports[name] = evaluate_metric(baseline_scores(name, split.test), human, name)
    return RunResult(result.model, result.log, reports)


def ablate(split: Split, what: str = "both", spec: FeatureSpec = FeatureSpec(),
           config: TrainConfig = TrainConfig(), arch: str = "linear",
           hidden: int = 0) -> list[dict]:
    """Loss-term grid and/or lambda sweep; one row per trained configuration."""
    rows = []
    if what in ("loss", "both"):
        for label, (use_ind, use_tot) in TERM_GRID.items():
            loss = dataclasses.replace(config.loss, use_ind=use_ind, use_tot=use_tot)
            run = fit_and_evaluate(split, spec, dataclasses.replace(config, loss=loss),
                                   arch, hidden, baselines=())
            rep: EvalReport = run.reports["learned"]
            rows.append({"grid": "loss", "setting": label,
                         "kendall_tau": rep.kendall_tau, "spearman_rho": rep.spearman_rho})
    if what in ("lambda", "both"):
        for lam in LAMBDA_GRID:
            loss = dataclasses.replace(config.loss, lam=lam, use_ind=True, use_tot=True)
            run = fit_and_evaluate(split, spec, dataclasses.replace(config, loss=loss),
                                   arch, hidden, baselines=())
            rep = run.reports["learned"]
            rows.append({"grid": "lambda", "setting": lam,
                         "kendall_tau": rep.kendall_tau, "spearman_rho": rep.spearman_rho})
    if not rows:
        raise ValueError(f"unknown ablation {what!r}; expected loss, lambda or both")
    return rows


def format_ablation(rows: list[dict]) -> str:
    """One table per grid with settings as columns."""
    out = []
    for grid in ("loss", "lambda"):
        sel = [r for r in rows if r["grid"] == grid]
        if not sel:
            continue
        head = f"{grid:<10}" + "".join(f"{str(r['setting']):>10}" for r in sel)
        out.append(head)
        out.append(f"{'Spearman':<10}" + "".join(f"{r['spearman_rho']:>10.3f}" for r in sel))
        out.append(f"{'Kendall':<10}" + "".join(f"{r['kendall_tau']:>10.3f}" for r in sel))
        out.append("")
    return "\n".join(out)
