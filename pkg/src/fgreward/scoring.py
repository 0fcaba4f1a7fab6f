"""Scoring systems: criteria, total-score formulas and quality orientation.

Two formulas are supported:

``sum_of_errors``
    Each criterion counts errors of one category; the total is the error
    count, so lower is better.

``hundred_minus_weighted_sum``
    Each criterion is a yes/no error flag ``S_i`` with weight ``W_i``;
    ``total = 100 - sum(S_i * W_i)``, so higher is better.

Everything downstream of this module works on :func:`quality_score`, which
flips lower-is-better systems so that a larger value always means a better
report.

Systems are described by a small YAML document::

    name: radcliq6
    formula: sum_of_errors
    criteria:
      - id: false_finding
        description: false prediction of a finding
        kind: error_count
        max_count: 2
        weight: 1.0
      ...
    tiers:                      # optional; bands on the native total
      - {name: high, lo: 0, hi: 2}
    corruption_map:             # optional; corruption kind -> criterion id
      false_finding: false_finding

The two built-in presets ship as ``data/radcliq6.yaml`` and
``data/mrscore7.yaml``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

from .errors import ConfigurationError, StructuralError, ValidationError

KINDS = ("error_count", "binary_error")
FORMULAS = ("sum_of_errors", "hundred_minus_weighted_sum")
PRESETS = ("radcliq6", "mrscore7")

CONFIG_DIR_ENV = "FGREWARD_CONFIG_DIR"


@dataclass(frozen=True)
class Criterion:
    id: str
    description: str = ""
    kind: str = "error_count"
    weight: float = 1.0
    max_count: int = 2

    @property
    def max_value(self) -> int:
        return self.max_count if self.kind == "error_count" else 1


@dataclass(frozen=True)
class TierBand:
    """A band ``lo <= total <= hi`` (``< hi`` when ``hi_inclusive`` is false)."""

    name: str
    lo: float
    hi: float
    hi_inclusive: bool = True

    def contains(self, total: float) -> bool:
        if total < self.lo:
            return False
        return total <= self.hi if self.hi_inclusive else total < self.hi

    def overlaps(self, other: "TierBand") -> bool:
        a, b = sorted((self, other), key=lambda t: (t.lo, t.hi))
        if b.lo > a.hi:
            return False
        if b.lo == a.hi:
            return a.hi_inclusive
        return True


@dataclass(frozen=True)
class ScoringSystem:
    name: str
    criteria: tuple[Criterion, ...]
    formula: str
    tiers: tuple[TierBand, ...] = ()
    corruption_map: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "criteria", tuple(self.criteria))
        object.__setattr__(self, "tiers", tuple(self.tiers))
        object.__setattr__(self, "corruption_map", dict(self.corruption_map))
        _validate_system(self)

    def __hash__(self):
        return hash((self.name, self.criteria, self.formula, self.tiers,
                     tuple(sorted(self.corruption_map.items()))))

    @property
    def n(self) -> int:
        return len(self.criteria)

    @property
    def ids(self) -> list[str]:
        return [c.id for c in self.criteria]

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.weight for c in self.criteria], dtype=float)

    @property
    def orientation(self) -> str:
        if self.formula == "sum_of_errors":
            return "lower_is_better"
        return "higher_is_better"

    @property
    def quality_range(self) -> tuple[float, float]:
        """``(min_total, max_total)`` of the native total score."""
        if self.formula == "sum_of_errors":
            return 0.0, float(sum(c.max_count for c in self.criteria))
        return 100.0 - float(self.weights.sum()), 100.0

    @property
    def range_width(self) -> float:
        lo, hi = self.quality_range
        return hi - lo

    def index(self, criterion_id: str) -> int:
        return self.ids.index(criterion_id)

    def tier_of(self, total: float) -> str | None:
        for band in self.tiers:
            if band.contains(total):
                return band.name
        return None


def _validate_system(system: ScoringSystem) -> None:
    if not system.name:
        raise ValidationError("system name must be non-empty", "name")
    if system.formula not in FORMULAS:
        raise ValidationError(
            f"unknown formula {system.formula!r}; expected one of {FORMULAS}", "formula")
    if len(system.criteria) < 1:
        raise ValidationError("at least one criterion is required", "criteria")
    seen = set()
    for i, c in enumerate(system.criteria):
        path = f"criteria[{i}]"
        if not c.id:
            raise ValidationError("criterion id must be non-empty", f"{path}.id")
        if c.id in seen:
            raise ValidationError(f"duplicate criterion id {c.id!r}", f"{path}.id")
        seen.add(c.id)
        if c.kind not in KINDS:
            raise ValidationError(f"unknown kind {c.kind!r}", f"{path}.kind")
        if not math.isfinite(c.weight) or c.weight < 0:
            raise ValidationError(f"weight must be a finite number >= 0, got {c.weight}",
                                  f"{path}.weight")
        if c.kind == "error_count" and (int(c.max_count) != c.max_count or c.max_count < 0):
            raise ValidationError("max_count must be a non-negative integer",
                                  f"{path}.max_count")
        if system.formula == "sum_of_errors" and c.kind != "error_count":
            raise ValidationError("sum_of_errors systems need error_count criteria",
                                  f"{path}.kind")
        if system.formula == "hundred_minus_weighted_sum" and c.kind != "binary_error":
            raise ValidationError("weighted systems need binary_error criteria",
                                  f"{path}.kind")
    for i, band in enumerate(system.tiers):
        if band.hi < band.lo:
            raise ValidationError("tier hi must be >= lo", f"tiers[{i}]")
        for j in range(i):
            if band.overlaps(system.tiers[j]):
                raise ValidationError(
                    f"tier {band.name!r} overlaps tier {system.tiers[j].name!r}", f"tiers[{i}]")
    for kind, cid in system.corruption_map.items():
        if cid not in seen:
            raise ValidationError(f"corruption kind {kind!r} maps to unknown criterion {cid!r}",
                                  f"corruption_map.{kind}")


def validate_subs(system: ScoringSystem, subs: Sequence[float]) -> np.ndarray:
    """Check ``subs`` against the system and return it as a float array."""
    values = np.asarray(subs, dtype=float)
    if values.ndim != 1 or values.shape[0] != system.n:
        raise StructuralError(
            f"expected {system.n} sub-scores for system {system.name!r}, got shape {values.shape}")
    for c, v in zip(system.criteria, values):
        if not math.isfinite(v):
            raise ValidationError(f"sub-score {v} is not finite", c.id)
        if c.kind == "binary_error":
            if v not in (0.0, 1.0):
                raise ValidationError(f"binary sub-score must be 0 or 1, got {v}", c.id)
        else:
            if v != int(v) or v < 0 or v > c.max_count:
                raise ValidationError(
                    f"error count must be an integer in [0, {c.max_count}], got {v}", c.id)
    return values


def total_score(system: ScoringSystem, subs: Sequence[float]) -> float:
    values = validate_subs(system, subs)
    if system.formula == "sum_of_errors":
        return float(values.sum())
    return float(100.0 - values @ system.weights)


def quality_score(system: ScoringSystem, subs: Sequence[float]) -> float:
    """Total score in higher-is-better orientation."""
    total = total_score(system, subs)
    if system.orientation == "lower_is_better":
        return system.quality_range[1] - total
    return total


def sub_quality(system: ScoringSystem, subs: Sequence[float]) -> np.ndarray:
    """Per-criterion contribution to quality, up to a constant offset.

    Error counts map to ``-count`` and binary flags to ``-S_i * W_i``, so
    differences of two reports' sub-qualities sum to their quality margin.
    """
    values = validate_subs(system, subs)
    if system.formula == "sum_of_errors":
        return -values
    return -values * system.weights


def to_quality(system: ScoringSystem, totals) -> np.ndarray:
    """Map native totals to quality orientation, vectorized."""
    totals = np.asarray(totals, dtype=float)
    if system.orientation == "lower_is_better":
        return system.quality_range[1] - totals
    return totals


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------

def system_to_dict(system: ScoringSystem) -> dict:
    criteria = []
    for c in system.criteria:
        entry = {"id": c.id, "description": c.description, "kind": c.kind}
        if c.kind == "error_count":
            entry["max_count"] = int(c.max_count)
        entry["weight"] = float(c.weight)
        criteria.append(entry)
    out = {"name": system.name, "formula": system.formula, "criteria": criteria}
    if system.tiers:
        out["tiers"] = [
            {"name": t.name, "lo": t.lo, "hi": t.hi, "hi_inclusive": t.hi_inclusive}
            for t in system.tiers
        ]
    if system.corruption_map:
        out["corruption_map"] = dict(system.corruption_map)
    return out


def system_from_dict(doc: Mapping) -> ScoringSystem:
    if not isinstance(doc, Mapping):
        raise ValidationError("scoring-system document must be a mapping")
    for key in ("name", "formula", "criteria"):
        if key not in doc:
            raise ValidationError("missing required field", key)
    raw = doc["criteria"]
    if not isinstance(raw, list):
        raise ValidationError("criteria must be a list", "criteria")
    criteria = []
    for i, item in enumerate(raw):
        path = f"criteria[{i}]"
        if not isinstance(item, Mapping) or "id" not in item:
            raise ValidationError("criterion must be a mapping with an id", path)
        try:
            weight = float(item.get("weight", 1.0))
        except (TypeError, ValueError):
            raise ValidationError("weight must be a number", f"{path}.weight") from None
        criteria.append(Criterion(
            id=str(item["id"]),
            description=str(item.get("description", "")),
            kind=str(item.get("kind", "error_count")),
            weight=weight,
            max_count=item.get("max_count", 2),
        ))
    tiers = []
    for i, t in enumerate(doc.get("tiers") or []):
        try:
            tiers.append(TierBand(str(t["name"]), float(t["lo"]), float(t["hi"]),
                                  bool(t.get("hi_inclusive", True))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed tier ({exc})", f"tiers[{i}]") from None
    return ScoringSystem(
        name=str(doc["name"]),
        criteria=tuple(criteria),
        formula=str(doc["formula"]),
        tiers=tuple(tiers),
        corruption_map=dict(doc.get("corruption_map") or {}),
    )


def dump_system(system: ScoringSystem) -> str:
    return yaml.safe_dump(system_to_dict(system), sort_keys=False)


def loads_system(text: str) -> ScoringSystem:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"document does not parse: {exc}") from None
    return system_from_dict(doc)


def load_system(definition: str | os.PathLike) -> ScoringSystem:
    """Load a scoring system from a preset name, a YAML file, or YAML text.

    Names are looked up in ``$FGREWARD_CONFIG_DIR/<name>.yaml`` first, then
    among the built-in presets.
    """
    text = str(definition)
    if "\n" in text or text.lstrip().startswith("{"):
        return loads_system(text)
    path = Path(text)
    if path.suffix in (".yaml", ".yml") or path.exists():
        return loads_system(path.read_text(encoding="utf-8"))
    config_dir = os.environ.get(CONFIG_DIR_ENV)
    if config_dir:
        candidate = Path(config_dir) / f"{text}.yaml"
        if candidate.exists():
            return loads_system(candidate.read_text(encoding="utf-8"))
    if text in PRESETS:
        return loads_system(
            resources.files("fgreward").joinpath("data", f"{text}.yaml").read_text("utf-8"))
    raise ValidationError(f"unknown scoring system {text!r}; presets are {PRESETS}")


def preset(name: str) -> ScoringSystem:
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; presets are {PRESETS}")
    return load_system(name)


def require_tiers(system: ScoringSystem, tiers: Iterable[TierBand] | None = None):
    tiers = tuple(tiers) if tiers is not None else system.tiers
    if not tiers:
        raise ConfigurationError(f"system {system.name!r} defines no tiers")
    return tiers
