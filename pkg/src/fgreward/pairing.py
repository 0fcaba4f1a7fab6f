"""Accepted/rejected report pairs with per-criterion and total margins.

Records that share a reference are paired exhaustively: every two records
with different quality give one pair, the better one accepted. Margins are
taken in quality orientation (and in weighted units for weighted systems),
so the sub-margins of a pair always sum to its total margin. Sub-margins may
be negative or zero; the total margin is strictly positive.

Pair files are JSON lines::

    {"reference_text", "accepted_text", "rejected_text", "sub_margins",
     "total_margin", "normalized", "reference_id", "accepted_id",
     "rejected_id", "system", "accepted_subs", "rejected_subs",
     "raw_sub_margins", "raw_total_margin"}
"""

from __future__ import annotations

import dataclasses
import itertools
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import ReportRecord, check_record, make_record
from .errors import ConfigurationError, ParseError, ValidationError
from .scoring import ScoringSystem, sub_quality

PAIR_FIELDS = ("reference_text", "accepted_text", "rejected_text", "sub_margins",
               "total_margin", "normalized", "reference_id", "accepted_id", "rejected_id",
               "system", "accepted_subs", "rejected_subs", "raw_sub_margins",
               "raw_total_margin")


@dataclass(frozen=True)
class ReportPair:
    reference_text: str
    accepted: ReportRecord
    rejected: ReportRecord
    sub_margins: tuple
    total_margin: float
    raw_sub_margins: tuple
    raw_total_margin: float
    normalized: bool = False

    @property
    def reference_id(self) -> str:
        return self.accepted.reference_id

    @property
    def system(self) -> str:
        return self.accepted.system


def raw_margins(accepted: ReportRecord, rejected: ReportRecord,
                system: ScoringSystem) -> tuple[np.ndarray, float]:
    sub = sub_quality(system, accepted.subs) - sub_quality(system, rejected.subs)
    return sub, float(accepted.quality - rejected.quality)


def make_pairs(records: Sequence[ReportRecord], system: ScoringSystem) -> list[ReportPair]:
    """Pair every two distinct-quality records of each reference group.

    Output is sorted by reference id, then by descending total margin, then
    by descending accepted quality and record ids.
    """
    groups: dict[str, list[ReportRecord]] = {}
    for rec in records:
        check_record(rec, system)
        groups.setdefault(rec.reference_id, []).append(rec)
    pairs = []
    for ref_id in sorted(groups):
        group = []
        for a, b in itertools.combinations(groups[ref_id], 2):
            if a.quality == b.quality:
                continue
            if a.reference_text != b.reference_text:
                raise ValidationError(f"records of reference {ref_id!r} disagree on its text")
            acc, rej = (a, b) if a.quality > b.quality else (b, a)
            sub, total = raw_margins(acc, rej, system)
            sub_t = tuple(float(v) for v in sub)
            group.append(ReportPair(acc.reference_text, acc, rej, sub_t, total, sub_t, total))
        group.sort(key=lambda p: (-p.total_margin, -p.accepted.quality,
                                  p.accepted.id, p.rejected.id))
        pairs.extend(group)
    return pairs


def margin_normalize(pair: ReportPair, system: ScoringSystem) -> ReportPair:
    """Divide margins by the width of the system's quality range.

    Raw margins stay on the pair; normalizing twice is a no-op.
    """
    if pair.normalized:
        return pair
    width = system.range_width
    if not width > 0:
        raise ConfigurationError(f"system {system.name!r} has a zero-width quality range")
    return dataclasses.replace(
        pair,
        sub_margins=tuple(v / width for v in pair.raw_sub_margins),
        total_margin=pair.raw_total_margin / width,
        normalized=True,
    )


def normalize_all(pairs: Iterable[ReportPair], system: ScoringSystem) -> list[ReportPair]:
    return [margin_normalize(p, system) for p in pairs]


def check_pair(pair: ReportPair, system: ScoringSystem) -> None:
    """Recompute margins from the stored sub-scores and compare exactly."""
    sub, total = raw_margins(pair.accepted, pair.rejected, system)
    if not total > 0:
        raise ValidationError("total margin must be positive")
    if tuple(float(v) for v in sub) != tuple(pair.raw_sub_margins) or total != pair.raw_total_margin:
        raise ValidationError("stored margins do not match the sub-scores")
    expected = dataclasses.replace(pair, normalized=False, sub_margins=pair.raw_sub_margins,
                                   total_margin=pair.raw_total_margin)
    if pair.normalized:
        expected = margin_normalize(expected, system)
    if expected.sub_margins != pair.sub_margins or expected.total_margin != pair.total_margin:
        raise ValidationError("stored margins are not consistent with the normalization flag")


# --------------------------------------------------------------------------
# I/O
# --------------------------------------------------------------------------

def _pair_dict(p: ReportPair) -> dict:
    return {
        "reference_text": p.reference_text,
        "accepted_text": p.accepted.candidate_text,
        "rejected_text": p.rejected.candidate_text,
        "sub_margins": list(p.sub_margins),
        "total_margin": p.total_margin,
        "normalized": p.normalized,
        "reference_id": p.reference_id,
        "accepted_id": p.accepted.id,
        "rejected_id": p.rejected.id,
        "system": p.system,
        "accepted_subs": list(p.accepted.subs),
        "rejected_subs": list(p.rejected.subs),
        "raw_sub_margins": list(p.raw_sub_margins),
        "raw_total_margin": p.raw_total_margin,
    }


def write_pairs(pairs: Iterable[ReportPair], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in pairs:
            fh.write(json.dumps(_pair_dict(p), ensure_ascii=False) + "\n")


def read_pairs(path, system: ScoringSystem) -> list[ReportPair]:
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed pair: {exc.msg}", lineno) from None
            missing = [k for k in PAIR_FIELDS if not isinstance(d, dict) or k not in d]
            if missing:
                raise ParseError(f"pair missing fields {missing}", lineno)
            if d["system"] != system.name:
                raise ValidationError(
                    f"line {lineno}: pair belongs to system {d['system']!r}, not {system.name!r}")
            acc = make_record(system, d["accepted_id"], d["reference_id"], d["reference_text"],
                              d["accepted_text"], d["accepted_subs"])
            rej = make_record(system, d["rejected_id"], d["reference_id"], d["reference_text"],
                              d["rejected_text"], d["rejected_subs"])
            pair = ReportPair(
                reference_text=d["reference_text"], accepted=acc, rejected=rej,
                sub_margins=tuple(float(v) for v in d["sub_margins"]),
                total_margin=float(d["total_margin"]),
                raw_sub_margins=tuple(float(v) for v in d["raw_sub_margins"]),
                raw_total_margin=float(d["raw_total_margin"]),
                normalized=bool(d["normalized"]),
            )
            try:
                check_pair(pair, system)
            except ValidationError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from None
            pairs.append(pair)
    return pairs
