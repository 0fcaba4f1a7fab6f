"""Rank correlations, sub-score accuracy and baseline text metrics.

Kendall's tau is the tie-corrected tau-b, ``(C - D) / sqrt((n0 - n1)(n0 - n2))``,
with an asymptotic p-value from the tie-adjusted variance of ``S = C - D``
and a continuity correction of 1 on ``|S|``.
Spearman's rho is the Pearson correlation of mid-ranks with a t-approximation
p-value. For ``n <= 10`` both also offer an exact two-sided permutation
p-value that enumerates every ordering of ``y``.

BLEU-4 uses uniform weights over 1..4-gram clipped precisions, the standard
brevity penalty and add-epsilon (``1e-9``) smoothing of zero match counts;
a candidate sharing no token with the reference scores exactly 0.
ROUGE-L is the F1 of token-level longest common subsequence precision and
recall.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import StructuralError, UndefinedCorrelationError, ValidationError
from .features import tokenize
from .scoring import ScoringSystem

BLEU_EPS = 1e-9
PERMUTATION_MAX_N = 10


def _pair_arrays(x, y, min_n=2):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise StructuralError(f"x and y must be equal-length vectors, got {x.shape}, {y.shape}")
    if x.shape[0] < min_n:
        raise ValidationError(f"need at least {min_n} observations, got {x.shape[0]}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("non-finite values in correlation input")
    return x, y


def _tie_sizes(v: np.ndarray) -> np.ndarray:
    _, counts = np.unique(v, return_counts=True)
    return counts[counts > 1].astype(float)


def _kendall_s(x: np.ndarray, y: np.ndarray) -> float:
    sx = np.sign(x[:, None] - x[None, :])
    sy = np.sign(y[:, None] - y[None, :])
    return float(np.sum(np.triu(sx * sy, 1)))


def _kendall_denominator(x, y) -> float:
    n = x.shape[0]
    n0 = n * (n - 1) / 2
    n1 = float(np.sum(_tie_sizes(x) * (_tie_sizes(x) - 1) / 2))
    n2 = float(np.sum(_tie_sizes(y) * (_tie_sizes(y) - 1) / 2))
    if n0 == n1 or n0 == n2:
        raise UndefinedCorrelationError("Kendall tau is undefined for a constant vector")
    return math.sqrt((n0 - n1) * (n0 - n2))


def kendall_variance(x, y) -> float:
    """Variance of ``S = C - D`` under independence, adjusted for ties."""
    n = float(len(x))
    t = _tie_sizes(np.asarray(x))
    u = _tie_sizes(np.asarray(y))
    v0 = n * (n - 1) * (2 * n + 5)
    vt = np.sum(t * (t - 1) * (2 * t + 5))
    vu = np.sum(u * (u - 1) * (2 * u + 5))
    v1 = np.sum(t * (t - 1)) * np.sum(u * (u - 1))
    v2 = np.sum(t * (t - 1) * (t - 2)) * np.sum(u * (u - 1) * (u - 2))
    var = (v0 - vt - vu) / 18.0 + v1 / (2 * n * (n - 1))
    if n > 2:
        var += v2 / (9 * n * (n - 1) * (n - 2))
    return float(var)


def kendall_tau(x, y, method: str = "asymptotic") -> tuple[float, float]:
    """Tau-b and its two-sided p-value (``method`` is ``asymptotic`` or ``exact``)."""
    x, y = _pair_arrays(x, y)
    tau = _kendall_s(x, y) / _kendall_denominator(x, y)
    tau = float(min(1.0, max(-1.0, tau)))
    if method == "exact":
        return tau, _permutation_p(x, y, "kendall")
    if method != "asymptotic":
        raise ValidationError(f"unknown method {method!r}", "method")
    var = kendall_variance(x, y)
    if var <= 0:
        return tau, 1.0
    # continuity correction: S moves in steps of 2 when there are no ties
    z = max(abs(_kendall_s(x, y)) - 1.0, 0.0) / math.sqrt(var)
    return tau, float(min(1.0, 2 * stats.norm.sf(z)))


def midranks(v) -> np.ndarray:
    """1-based ranks with ties replaced by their average rank."""
    v = np.asarray(v, dtype=float)
    order = np.argsort(v, kind="mergesort")
    ranks = np.empty(len(v))
    sv = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    if den == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant vector")
    return float(a @ b) / den


def spearman(x, y, method: str = "asymptotic") -> tuple[float, float]:
    """Spearman's rho and its two-sided p-value."""
    x, y = _pair_arrays(x, y)
    rho = max(-1.0, min(1.0, _pearson(midranks(x), midranks(y))))
    if method == "exact":
        return rho, _permutation_p(x, y, "spearman")
    if method != "asymptotic":
        raise ValidationError(f"unknown method {method!r}", "method")
    n = len(x)
    if n < 3:
        raise ValidationError("the t-approximation needs at least 3 observations")
    if abs(rho) >= 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, float(2 * stats.t.sf(abs(t), n - 2))


@lru_cache(maxsize=4)
def _all_permutations(n: int) -> np.ndarray:
    """Every permutation of ``range(n)`` as rows of an (n!, n) int8 array."""
    perms = np.zeros((1, 0), dtype=np.int8)
    for k in range(n):
        rows = []
        for pos in range(k + 1):
            rows.append(np.insert(perms, pos, k, axis=1))
        perms = np.vstack(rows)
    perms.setflags(write=False)
    return perms


def _permutation_p(x, y, statistic: str, chunk: int = 200_000) -> float:
    n = len(x)
    if n > PERMUTATION_MAX_N:
        raise ValidationError(f"exact permutation p is limited to n <= {PERMUTATION_MAX_N}")
    perms = _all_permutations(n)
    tol = 1e-12
    if statistic == "kendall":
        iu, ju = np.triu_indices(n, 1)
        wx = np.sign(x[iu] - x[ju]).astype(np.float32)
        # dense integer ranks keep the order of y and fit in int8
        ry = np.unique(y, return_inverse=True)[1].astype(np.int8)
        observed = abs(float(wx @ np.sign(ry[iu] - ry[ju]).astype(np.float32)))
        hits = 0
        for s in range(0, len(perms), chunk):
            yp = ry[perms[s:s + chunk]]
            stat = np.sign(yp[:, iu] - yp[:, ju]).astype(np.float32) @ wx
            hits += int(np.sum(np.abs(stat) >= observed - 0.5))
    else:
        rx = midranks(x)
        rx = rx - rx.mean()
        ry = midranks(y)
        ry = ry - ry.mean()
        observed = abs(float(rx @ ry))
        hits = 0
        for s in range(0, len(perms), chunk):
            stat = ry[perms[s:s + chunk]] @ rx
            hits += int(np.sum(np.abs(stat) >= observed - tol))
    return hits / len(perms)


# --------------------------------------------------------------------------
# Sub-score accuracy
# --------------------------------------------------------------------------

def subscore_accuracy(predicted, truth, system: ScoringSystem | None = None) -> np.ndarray:
    """Per-criterion fraction of samples whose binary prediction matches the truth."""
    if system is not None and system.formula != "hundred_minus_weighted_sum":
        raise ValidationError(f"system {system.name!r} is not a binary_error system")
    P = np.asarray(predicted, dtype=float)
    T = np.asarray(truth, dtype=float)
    if P.shape != T.shape or P.ndim != 2:
        raise StructuralError(f"prediction shape {P.shape} != truth shape {T.shape}")
    if not (np.isin(P, (0, 1)).all() and np.isin(T, (0, 1)).all()):
        raise ValidationError("sub-scores must be binary")
    return (P == T).mean(axis=0)


def fit_thresholds(rewards, truth) -> np.ndarray:
    """Per-criterion reward threshold maximizing accuracy of ``error = reward < threshold``.

    Candidate thresholds are midpoints between sorted distinct rewards plus
    the two open ends; ties in accuracy go to the smallest threshold.
    """
    R = np.asarray(rewards, dtype=float)
    T = np.asarray(truth, dtype=float)
    out = np.empty(R.shape[1])
    for j in range(R.shape[1]):
        u = np.unique(R[:, j])
        cands = np.concatenate([[u[0] - 1.0], (u[:-1] + u[1:]) / 2, [u[-1] + 1.0]])
        acc = [np.mean((R[:, j] < th).astype(float) == T[:, j]) for th in cands]
        out[j] = cands[int(np.argmax(acc))]
    return out


def predict_binary(rewards, thresholds) -> np.ndarray:
    return (np.asarray(rewards, dtype=float) < np.asarray(thresholds)).astype(float)


# --------------------------------------------------------------------------
# Baseline text metrics
# --------------------------------------------------------------------------

def _ngram_counts(tokens, n) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(reference: str, candidate: str) -> float:
    ref, cand = tokenize(reference), tokenize(candidate)
    if not ref or not cand:
        raise ValidationError("BLEU needs non-empty texts")
    if not set(cand) & set(ref):
        return 0.0
    log_p = 0.0
    for n in range(1, 5):
        c_counts = _ngram_counts(cand, n)
        r_counts = _ngram_counts(ref, n)
        total = sum(c_counts.values())
        match = sum(min(k, r_counts[g]) for g, k in c_counts.items())
        if match == 0:
            p = BLEU_EPS / max(total, 1)
        else:
            p = match / total
        log_p += math.log(p) / 4.0
    bp = 1.0 if len(cand) > len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return bp * math.exp(log_p)


def lcs_length(a: Sequence, b: Sequence) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(reference: str, candidate: str) -> float:
    ref, cand = tokenize(reference), tokenize(candidate)
    if not ref or not cand:
        raise ValidationError("ROUGE-L needs non-empty texts")
    lcs = lcs_length(ref, cand)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(cand), lcs / len(ref)
    return 2 * p * r / (p + r)


BASELINES = {"bleu4": bleu4, "rouge_l": rouge_l}


# --------------------------------------------------------------------------
# Reports
# --------------------------------------------------------------------------

@dataclass
class EvalReport:
    metric_name: str
    kendall_tau: float
    kendall_p: float
    spearman_rho: float
    spearman_p: float
    n: int
    per_criterion: list = field(default_factory=list)

    def row(self) -> dict:
        return {"metric": self.metric_name, "kendall_tau": self.kendall_tau,
                "kendall_p": self.kendall_p, "spearman_rho": self.spearman_rho,
                "spearman_p": self.spearman_p, "n": self.n}


def evaluate_metric(scores, human, metric_name: str = "metric",
                    per_criterion: dict | None = None) -> EvalReport:
    """Correlate metric scores with human scores, both in quality orientation.

    ``per_criterion`` maps a criterion id to ``(metric_scores, human_scores)``
    (correlations) or to ``{"accuracy": value}``.
    """
    tau, tp = kendall_tau(scores, human)
    rho, rp = spearman(scores, human)
    rows = []
    for cid, item in (per_criterion or {}).items():
        if isinstance(item, dict):
            rows.append({"criterion": cid, **item})
            continue
        ms, hs = item
        try:
            ct, ctp = kendall_tau(ms, hs)
            cr, crp = spearman(ms, hs)
        except UndefinedCorrelationError:
            ct = ctp = cr = crp = float("nan")
        rows.append({"criterion": cid, "kendall_tau": ct, "kendall_p": ctp,
                     "spearman_rho": cr, "spearman_p": crp})
    return EvalReport(metric_name, tau, tp, rho, rp, len(np.asarray(scores)), rows)


def format_table(reports: Sequence[EvalReport]) -> str:
    """Aligned text table, one metric per row."""
    header = f"{'Metric':<16} {'Kendall tau (p)':>24} {'Spearman rho (p)':>24} {'n':>6}"
    lines = [header, "-" * len(header)]
    for r in reports:
        lines.append(f"{r.metric_name:<16} {r.kendall_tau:>8.3f} ({r.kendall_p:>9.2e}) "
                     f"     {r.spearman_rho:>8.3f} ({r.spearman_p:>9.2e}) {r.n:>6d}")
    return "\n".join(lines) + "\n"


def format_csv(reports: Sequence[EvalReport]) -> str:
    lines = ["metric,kendall_tau,kendall_p,spearman_rho,spearman_p,n"]
    for r in reports:
        lines.append(f"{r.metric_name},{r.kendall_tau!r},{r.kendall_p!r},"
                     f"{r.spearman_rho!r},{r.spearman_p!r},{r.n}")
    return "\n".join(lines) + "\n"


def format_criteria(report: EvalReport) -> str:
    if not report.per_criterion:
        return ""
    keys = [k for k in report.per_criterion[0] if k != "criterion"]
    lines = [f"{'criterion':<24}" + "".join(f"{k:>16}" for k in keys)]
    for row in report.per_criterion:
        lines.append(f"{row['criterion']:<24}" + "".join(f"{row[k]:>16.4g}" for k in keys))
    return "\n".join(lines) + "\n"
