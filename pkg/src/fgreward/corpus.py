"""Report records, record files and a rule-based corruption generator.

The generator takes a reference report, applies sentence-level edits whose
error category is known, and returns the candidate text together with the
exact sub-scores those edits imply. Tiered generation picks a target error
level per band and plans edits until the planted total lands inside it.

Record files are JSON lines with a fixed field order::

    {"id", "reference_id", "system", "reference_text", "candidate_text",
     "subs", "total", "quality", "tier"}
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import yaml

from .errors import ConfigurationError, ParseError, ValidationError
from .scoring import (
    ScoringSystem,
    TierBand,
    preset,
    quality_score,
    require_tiers,
    total_score,
)

CORRUPTION_KINDS = (
    "false_finding",
    "omit_finding",
    "wrong_location",
    "wrong_severity",
    "spurious_comparison",
    "omit_comparison",
    # Extra kinds so the weighted system's language items are reachable.
    "grammar_error",
    "misused_term",
)
INSERT_KINDS = ("false_finding", "spurious_comparison")

ABBREVIATIONS = ("dr.", "e.g.", "i.e.", "approx.", "vs.", "no.", "cf.")

RECORD_FIELDS = ("id", "reference_id", "system", "reference_text", "candidate_text",
                 "subs", "total", "quality", "tier")


# --------------------------------------------------------------------------
# Lexicon and templates
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Lexicon:
    laterality: dict
    severity: dict
    comparison_markers: tuple
    misused_terms: dict
    paraphrases: tuple

    @classmethod
    def from_dict(cls, doc) -> "Lexicon":
        def symmetric(pairs):
            out = {}
            for a, b in pairs:
                out[a] = b
                out[b] = a
            return out

        return cls(
            laterality=symmetric(doc.get("laterality", [])),
            severity=symmetric(doc.get("severity", [])),
            comparison_markers=tuple(doc.get("comparison_markers", [])),
            misused_terms=dict(doc.get("misused_terms", {})),
            paraphrases=tuple(tuple(p) for p in doc.get("paraphrases", [])),
        )


def _data_text(name: str) -> str:
    return resources.files("fgreward").joinpath("data", name).read_text("utf-8")


@lru_cache(maxsize=None)
def default_lexicon() -> Lexicon:
    return Lexicon.from_dict(yaml.safe_load(_data_text("lexicon.yaml")))


def load_lexicon(path) -> Lexicon:
    return Lexicon.from_dict(yaml.safe_load(Path(path).read_text(encoding="utf-8")))


@lru_cache(maxsize=None)
def templates() -> dict:
    return yaml.safe_load(_data_text("templates.yaml"))


def bundled_references() -> list[str]:
    """The shipped mini-corpus of template reference reports."""
    return [line.strip() for line in _data_text("references.txt").splitlines() if line.strip()]


def _fill(template: str, rng: np.random.Generator, tpl: dict) -> str:
    severity = str(rng.choice(tpl["severities"]))
    return template.format(
        side=str(rng.choice(tpl["sides"])),
        severity=severity,
        Severity=severity.capitalize(),
        noun=str(rng.choice(tpl["comparison_nouns"])),
    )


def synthesize_references(n: int, seed: int = 0) -> list[str]:
    """Compose ``n`` reference reports from the sentence templates."""
    tpl = templates()
    rng = np.random.default_rng(seed)
    refs = []
    for _ in range(n):
        k_find = int(rng.integers(2, 5))
        k_norm = int(rng.integers(1, 3))
        k_comp = int(rng.integers(1, 3))
        finds = rng.choice(len(tpl["findings"]), size=k_find, replace=False)
        norms = rng.choice(len(tpl["normals"]), size=k_norm, replace=False)
        comps = rng.choice(len(tpl["comparisons"]), size=k_comp, replace=False)
        sentences = [_fill(tpl["findings"][i], rng, tpl) for i in finds]
        sentences += [_fill(tpl["comparisons"][i], rng, tpl) for i in comps]
        sentences += [tpl["normals"][i] for i in norms]
        refs.append(" ".join(sentences))
    return refs


# --------------------------------------------------------------------------
# Sentences
# --------------------------------------------------------------------------

def split_sentences(text: str) -> list[str]:
    """Split on a period followed by whitespace, keeping known abbreviations."""
    pieces = re.split(r"(?<=\.)\s+", text.strip())
    out: list[str] = []
    for piece in pieces:
        if not piece:
            continue
        if out and out[-1].lower().split()[-1] in ABBREVIATIONS:
            out[-1] = f"{out[-1]} {piece}"
        else:
            out.append(piece)
    return out


def join_sentences(sentences: Sequence[str]) -> str:
    return " ".join(sentences)


def _words(sentence: str) -> list[str]:
    return re.findall(r"[A-Za-z]+", sentence.lower())


def is_comparison(sentence: str, lexicon: Lexicon) -> bool:
    words = set(_words(sentence))
    return any(m in words for m in lexicon.comparison_markers)


def _match_case(word: str, template: str) -> str:
    if template.isupper():
        return word.upper()
    if template[:1].isupper():
        return word[:1].upper() + word[1:]
    return word


def _swap_first(sentence: str, table: dict) -> str | None:
    """Replace the first word found in ``table`` by its partner."""
    for m in re.finditer(r"[A-Za-z]+", sentence):
        partner = table.get(m.group().lower())
        if partner is not None:
            return sentence[:m.start()] + _match_case(partner, m.group()) + sentence[m.end():]
    return None


def _grammar_break(sentence: str) -> str | None:
    for pattern, repl in ((r"\bis\b", "are"), (r"\bare\b", "is"), (r"\bhas\b", "have"),
                          (r"\bthe\b ", "")):
        new, k = re.subn(pattern, repl, sentence, count=1)
        if k:
            return new
    return None


def _rewrite(kind: str, sentence: str, lexicon: Lexicon) -> str | None:
    if kind == "wrong_location":
        return _swap_first(sentence, lexicon.laterality)
    if kind == "wrong_severity":
        return _swap_first(sentence, lexicon.severity)
    if kind == "misused_term":
        return _swap_first(sentence, lexicon.misused_terms)
    if kind == "grammar_error":
        return _grammar_break(sentence)
    raise AssertionError(kind)


def eligible(kind: str, sentence: str, lexicon: Lexicon) -> bool:
    """Whether ``kind`` can be applied to ``sentence``."""
    if kind == "omit_finding":
        return not is_comparison(sentence, lexicon)
    if kind == "omit_comparison":
        return is_comparison(sentence, lexicon)
    if kind in INSERT_KINDS:
        return True
    return _rewrite(kind, sentence, lexicon) is not None


# --------------------------------------------------------------------------
# Corruption
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CorruptionOp:
    """One edit. Insert kinds place a sentence *before* ``target_sentence_index``."""

    kind: str
    target_sentence_index: int
    replacement: str = ""

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ValidationError(f"unknown corruption kind {self.kind!r}", "kind")


def derive_seed(*parts) -> int:
    """Stable 64-bit seed from arbitrary parts (independent of PYTHONHASHSEED)."""
    digest = hashlib.blake2b(":".join(map(str, parts)).encode("utf-8"), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


def _insert_pool(kind: str, existing: Sequence[str], rng: np.random.Generator) -> str:
    tpl = templates()
    pool = tpl["findings"] if kind == "false_finding" else tpl["comparisons"]
    present = set(existing)
    for _ in range(64):
        sentence = _fill(pool[int(rng.integers(len(pool)))], rng, tpl)
        if sentence not in present:
            return sentence
    return sentence


def criterion_for(system: ScoringSystem, kind: str) -> int:
    cid = system.corruption_map.get(kind)
    if cid is None:
        raise ValidationError(
            f"corruption kind {kind!r} has no criterion in system {system.name!r}", "kind")
    return system.index(cid)


def _apply(sentences: list[str], op: CorruptionOp, rng, lexicon: Lexicon, position: int):
    n = len(sentences)
    i = op.target_sentence_index
    where = f"ops[{position}].target_sentence_index"
    if op.kind in INSERT_KINDS:
        if not 0 <= i <= n:
            raise ValidationError(f"index {i} out of range [0, {n}]", where)
        text = op.replacement or _insert_pool(op.kind, sentences, rng)
        sentences.insert(i, text)
        return
    if not 0 <= i < n:
        raise ValidationError(f"index {i} out of range [0, {n - 1}]", where)
    if not eligible(op.kind, sentences[i], lexicon):
        raise ValidationError(f"{op.kind} does not apply to sentence {sentences[i]!r}", where)
    if op.kind in ("omit_finding", "omit_comparison"):
        if n == 1:
            raise ValidationError("cannot remove the only sentence", where)
        del sentences[i]
    else:
        sentences[i] = op.replacement or _rewrite(op.kind, sentences[i], lexicon)


def corrupt(reference: str, ops: Sequence[CorruptionOp], seed: int = 0,
            system: ScoringSystem | None = None,
            lexicon: Lexicon | None = None) -> tuple[str, np.ndarray]:
    """Apply ``ops`` in order and return ``(candidate, subs)``.

    Each op adds one error to the criterion its kind maps to: error counts
    increment and saturate at ``max_count``, binary items are set to 1.
    ``system`` defaults to the six-category preset.
    """
    system = system or preset("radcliq6")
    lexicon = lexicon or default_lexicon()
    if not reference or not reference.strip():
        raise ValidationError("reference must be non-empty", "reference")
    sentences = split_sentences(reference)
    subs = np.zeros(system.n)
    rng = np.random.default_rng(derive_seed(seed, reference))
    for k, op in enumerate(ops):
        j = criterion_for(system, op.kind)
        _apply(sentences, op, rng, lexicon, k)
        crit = system.criteria[j]
        subs[j] = min(subs[j] + 1, crit.max_value)
    return join_sentences(sentences), subs


def paraphrase(text: str, rate: float, rng: np.random.Generator,
               lexicon: Lexicon | None = None) -> str:
    """Rewrite wording without changing any planted label."""
    lexicon = lexicon or default_lexicon()
    out = []
    for sentence in split_sentences(text):
        if rate > 0 and rng.random() < rate:
            options = [(a, b) for a, b in lexicon.paraphrases if a in sentence]
            if options:
                a, b = options[int(rng.integers(len(options)))]
                sentence = sentence.replace(a, b, 1)
        out.append(sentence)
    return join_sentences(out)


# --------------------------------------------------------------------------
# Records
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ReportRecord:
    id: str
    reference_id: str
    system: str
    reference_text: str
    candidate_text: str
    subs: tuple
    total: float
    quality: float
    tier: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "reference_id": self.reference_id,
            "system": self.system,
            "reference_text": self.reference_text,
            "candidate_text": self.candidate_text,
            "subs": [_num(v) for v in self.subs],
            "total": _num(self.total),
            "quality": _num(self.quality),
            "tier": self.tier,
        }


def _num(v):
    v = float(v)
    return int(v) if v.is_integer() else v


def make_record(system: ScoringSystem, id: str, reference_id: str, reference_text: str,
                candidate_text: str, subs, tier: str | None = None) -> ReportRecord:
    total = total_score(system, subs)
    return ReportRecord(
        id=id,
        reference_id=reference_id,
        system=system.name,
        reference_text=reference_text,
        candidate_text=candidate_text,
        subs=tuple(float(v) for v in subs),
        total=total,
        quality=quality_score(system, subs),
        tier=tier if tier is not None else system.tier_of(total),
    )


def check_record(record: ReportRecord, system: ScoringSystem) -> None:
    """Recompute total/quality from the stored subs and compare."""
    if record.system != system.name:
        raise ValidationError(
            f"record {record.id!r} belongs to system {record.system!r}, not {system.name!r}",
            "system")
    total = total_score(system, record.subs)
    if total != record.total:
        raise ValidationError(f"record {record.id!r}: stored total {record.total} != {total}",
                              "total")
    if quality_score(system, record.subs) != record.quality:
        raise ValidationError(f"record {record.id!r}: stored quality disagrees", "quality")


def write_records(records: Iterable[ReportRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")


def read_records(path, system: ScoringSystem | None = None) -> list[ReportRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed record: {exc.msg}", lineno) from None
            if not isinstance(doc, dict) or any(k not in doc for k in RECORD_FIELDS):
                missing = [k for k in RECORD_FIELDS if not isinstance(doc, dict) or k not in doc]
                raise ParseError(f"record missing fields {missing}", lineno)
            rec = ReportRecord(
                id=str(doc["id"]),
                reference_id=str(doc["reference_id"]),
                system=str(doc["system"]),
                reference_text=doc["reference_text"],
                candidate_text=doc["candidate_text"],
                subs=tuple(float(v) for v in doc["subs"]),
                total=float(doc["total"]),
                quality=float(doc["quality"]),
                tier=doc["tier"],
            )
            if system is not None:
                try:
                    check_record(rec, system)
                except ValidationError as exc:
                    raise ValidationError(f"line {lineno}: {exc}") from None
            records.append(rec)
    return records


# --------------------------------------------------------------------------
# Tiered generation
# --------------------------------------------------------------------------

@dataclass
class _Plan:
    sentences: list
    touched: list
    subs: np.ndarray
    ops: list = field(default_factory=list)


def _feasible_kinds(plan: _Plan, system: ScoringSystem, kinds, lexicon) -> list[str]:
    out = []
    for kind in kinds:
        j = criterion_for(system, kind)
        if plan.subs[j] >= system.criteria[j].max_value:
            continue
        if kind in INSERT_KINDS:
            out.append(kind)
            continue
        removing = kind in ("omit_finding", "omit_comparison")
        if removing and len(plan.sentences) <= 1:
            continue
        if any(not t and eligible(kind, s, lexicon)
               for s, t in zip(plan.sentences, plan.touched)):
            out.append(kind)
    return out


def _step(plan: _Plan, kind: str, system, rng, lexicon) -> None:
    if kind in INSERT_KINDS:
        idx = int(rng.integers(len(plan.sentences) + 1))
        text = _insert_pool(kind, plan.sentences, rng)
        op = CorruptionOp(kind, idx, text)
        plan.sentences.insert(idx, text)
        plan.touched.insert(idx, True)
    else:
        choices = [i for i, (s, t) in enumerate(zip(plan.sentences, plan.touched))
                   if not t and eligible(kind, s, lexicon)]
        idx = choices[int(rng.integers(len(choices)))]
        if kind in ("omit_finding", "omit_comparison"):
            op = CorruptionOp(kind, idx)
            del plan.sentences[idx]
            del plan.touched[idx]
        else:
            new = _rewrite(kind, plan.sentences[idx], lexicon)
            op = CorruptionOp(kind, idx, new)
            plan.sentences[idx] = new
            plan.touched[idx] = True
    j = criterion_for(system, kind)
    plan.subs[j] = min(plan.subs[j] + 1, system.criteria[j].max_value)
    plan.ops.append(op)


def _band_totals(system: ScoringSystem, band: TierBand) -> list[float]:
    """Candidate totals inside ``band`` that the formula can produce."""
    if system.formula == "sum_of_errors":
        lo, hi = system.quality_range
        return [float(t) for t in range(int(lo), int(hi) + 1) if band.contains(t)]
    w = system.weights
    totals = set()
    for mask in range(1 << system.n):
        pen = sum(w[i] for i in range(system.n) if mask >> i & 1)
        totals.add(100.0 - pen)
    return sorted(t for t in totals if band.contains(t))


def plan_corruption(reference: str, system: ScoringSystem, band: TierBand,
                    rng: np.random.Generator, lexicon: Lexicon | None = None,
                    attempts: int = 50) -> tuple[list[CorruptionOp], np.ndarray]:
    """Find ops whose planted total lands in ``band``.

    Each attempt draws a target total uniformly among the band's producible
    totals, then applies kinds drawn uniformly from those still applicable
    until the running total reaches the target. Raises
    :class:`ConfigurationError` when no attempt succeeds.
    """
    lexicon = lexicon or default_lexicon()
    kinds = [k for k in CORRUPTION_KINDS if k in system.corruption_map]
    targets = _band_totals(system, band)
    if not targets:
        raise ConfigurationError(f"tier band {band.name!r} [{band.lo}, {band.hi}] is "
                                 f"unreachable under system {system.name!r}")
    base = split_sentences(reference)
    for _ in range(attempts):
        target = targets[int(rng.integers(len(targets)))]
        plan = _Plan(list(base), [False] * len(base), np.zeros(system.n))
        while True:
            total = total_score(system, plan.subs)
            if total == target:
                return plan.ops, plan.subs
            feasible = _feasible_kinds(plan, system, kinds, lexicon)
            if system.formula == "hundred_minus_weighted_sum":
                # only kinds that do not overshoot below the target
                feasible = [k for k in feasible
                            if total - system.criteria[criterion_for(system, k)].weight
                            >= target]
            if not feasible:
                break
            _step(plan, feasible[int(rng.integers(len(feasible)))], system, rng, lexicon)
    raise ConfigurationError(f"tier band {band.name!r} [{band.lo}, {band.hi}] is unreachable "
                             f"for reference {reference[:40]!r} under system {system.name!r}")


def generate_tiered(references: Sequence, system: ScoringSystem,
                    tiers: Sequence[TierBand] | None = None, seed: int = 0,
                    paraphrase_rate: float = 0.3,
                    lexicon: Lexicon | None = None) -> list[ReportRecord]:
    """One corrupted candidate per (reference, tier band).

    ``references`` holds strings (ids ``ref0000``, ``ref0001``, ... are
    assigned) or ``(id, text)`` tuples. Each reference is generated with its
    own RNG seeded from ``(seed, reference id, band name)``, so results do not
    depend on processing order. After corruption, benign rewording is applied
    to a ``paraphrase_rate`` fraction of sentences; it never changes labels.
    """
    lexicon = lexicon or default_lexicon()
    bands = require_tiers(system, tiers)
    lo, hi = system.quality_range
    for band in bands:
        if band.hi < lo or band.lo > hi:
            raise ConfigurationError(
                f"tier band {band.name!r} lies outside the range [{lo}, {hi}]")
    records = []
    for k, ref in enumerate(references):
        ref_id, text = (ref if isinstance(ref, tuple) else (f"ref{k:04d}", ref))
        if not text or not text.strip():
            raise ValidationError(f"reference {ref_id!r} is empty")
        for band in bands:
            rng = np.random.default_rng(derive_seed(seed, ref_id, band.name))
            ops, _ = plan_corruption(text, system, band, rng, lexicon)
            candidate, subs = corrupt(text, ops, seed, system, lexicon)
            candidate = paraphrase(candidate, paraphrase_rate, rng, lexicon)
            rec = make_record(system, f"{ref_id}-{band.name}", ref_id, text, candidate, subs,
                              band.name)
            if not band.contains(rec.total):
                raise AssertionError("planner produced a total outside its band")
            records.append(rec)
    return records
