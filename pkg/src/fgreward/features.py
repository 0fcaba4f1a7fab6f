"""Fixed-length features for a (reference, candidate) pair.

The ``hashed_ngrams`` variant counts word n-grams and within-word character
n-grams (words padded with one space on each side, lower-cased) and folds
them into ``dim`` buckets. Up to four blocks share the bucket space, each
hashed with its own tag so they land in different buckets:

``cand``     n-gram counts of the candidate
``ref``      n-gram counts of the reference
``added``    ``max(cand - ref, 0)`` per n-gram
``removed``  ``max(ref - cand, 0)`` per n-gram

``added - removed`` is the candidate-minus-reference difference. Keeping its
two signs apart lets a linear head penalize both inserted and dropped
content. ``FeatureSpec.blocks`` picks the blocks that are summed, and
``norm`` either L2-normalizes the sum (``"l2"``) or multiplies it by the
fixed ``scale`` (``"none"``).

The default uses only ``added`` and ``removed`` with a fixed scale: an
unchanged candidate then maps to the zero vector, so every reference gets
the same baseline reward and the amount of change is not diluted by report
length. ``FeatureSpec.full()`` gives all four blocks, L2-normalized.

Hash: ``blake2b(tag + "\\x1f" + gram, digest_size=8, key=b"fgreward-hash-v1")``
read as a little-endian unsigned 64-bit integer; the bucket is that value
modulo ``dim``.

External vectors are read from text files with one ``id<TAB>v1,v2,...,vd``
line per record.
"""

from __future__ import annotations

import hashlib
import math
import re
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np

from .errors import ParseError, StructuralError, ValidationError

HASH_KEY = b"fgreward-hash-v1"
BLOCKS = ("cand", "ref", "added", "removed")
NORMS = ("none", "l2")


@dataclass(frozen=True)
class FeatureSpec:
    variant: str = "hashed_ngrams"
    dim: int = 4096
    word_n: tuple = (1, 2)
    char_n: tuple = (3, 4)
    blocks: tuple = ("added", "removed")
    norm: str = "none"
    scale: float = 1.0 / 64

    def __post_init__(self):
        object.__setattr__(self, "word_n", tuple(sorted(self.word_n)))
        object.__setattr__(self, "char_n", tuple(sorted(self.char_n)))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if self.variant not in ("hashed_ngrams", "external"):
            raise ValidationError(f"unknown feature variant {self.variant!r}", "variant")
        if not self.blocks or any(b not in BLOCKS for b in self.blocks) \
                or len(set(self.blocks)) != len(self.blocks):
            raise ValidationError(f"blocks must be distinct names from {BLOCKS}", "blocks")
        if self.norm not in NORMS:
            raise ValidationError(f"unknown norm {self.norm!r}", "norm")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValidationError("scale must be a positive number", "scale")
        if self.dim < 8:
            raise ValidationError("dim must be >= 8", "dim")
        if self.variant == "hashed_ngrams" and self.dim & (self.dim - 1):
            raise ValidationError("hashed_ngrams dim must be a power of two", "dim")

    @classmethod
    def full(cls, dim: int = 4096, **kw) -> "FeatureSpec":
        """All four blocks, L2-normalized."""
        return cls(dim=dim, blocks=BLOCKS, norm="l2", **kw)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "dim": self.dim,
                "word_n": list(self.word_n), "char_n": list(self.char_n),
                "blocks": list(self.blocks), "norm": self.norm, "scale": self.scale}

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeatureSpec":
        return cls(d["variant"], int(d["dim"]), tuple(d.get("word_n", ())),
                   tuple(d.get("char_n", ())), tuple(d.get("blocks", BLOCKS)),
                   d.get("norm", "l2"), float(d.get("scale", 1.0)))


@lru_cache(maxsize=1 << 20)
def bucket(tag: str, gram: str, dim: int) -> int:
    h = hashlib.blake2b(f"{tag}\x1f{gram}".encode("utf-8"), digest_size=8, key=HASH_KEY)
    return int.from_bytes(h.digest(), "little") % dim


def tokenize(text: str) -> list[str]:
    return re.findall(r"[a-z0-9]+", text.lower())


def ngrams(text: str, word_n=(1, 2), char_n=(3, 4)) -> Counter:
    """Word and character n-gram counts; grams are prefixed ``w:`` / ``c:``."""
    words = tokenize(text)
    grams: Counter = Counter()
    for n in word_n:
        for i in range(len(words) - n + 1):
            grams["w:" + " ".join(words[i:i + n])] += 1
    for w in words:
        padded = f" {w} "
        for n in char_n:
            for i in range(len(padded) - n + 1):
                grams["c:" + padded[i:i + n]] += 1
    return grams


def _fold(tag: str, grams: Mapping[str, float], dim: int) -> np.ndarray:
    v = np.zeros(dim)
    for g in sorted(grams):
        v[bucket(tag, g, dim)] += grams[g]
    return v


def feature_blocks(spec: FeatureSpec, reference: str, candidate: str) -> dict:
    """The four un-normalized blocks, each of length ``spec.dim``."""
    if spec.variant != "hashed_ngrams":
        raise ValidationError("feature_blocks needs the hashed_ngrams variant", "variant")
    if not reference.strip() or not candidate.strip():
        raise ValidationError("reference and candidate must be non-empty")
    c = ngrams(candidate, spec.word_n, spec.char_n)
    r = ngrams(reference, spec.word_n, spec.char_n)
    added = {g: c[g] - r[g] for g in c if c[g] > r[g]}
    removed = {g: r[g] - c[g] for g in r if r[g] > c[g]}
    return {
        "cand": _fold("cand", c, spec.dim),
        "ref": _fold("ref", r, spec.dim),
        "added": _fold("added", added, spec.dim),
        "removed": _fold("removed", removed, spec.dim),
    }


def featurize(spec: FeatureSpec, reference: str, candidate: str,
              table: Mapping[str, np.ndarray] | None = None,
              record_id: str | None = None) -> np.ndarray:
    """Map a text pair to a vector of length ``spec.dim``.

    For the ``external`` variant the vector is looked up in ``table`` by
    ``record_id`` and returned as stored.
    """
    if spec.variant == "external":
        if table is None or record_id not in table:
            raise LookupError(f"no external vector for record {record_id!r}")
        v = np.asarray(table[record_id], dtype=float)
        if v.shape != (spec.dim,):
            raise StructuralError(f"external vector for {record_id!r} has shape {v.shape}")
        return v
    blocks = feature_blocks(spec, reference, candidate)
    v = np.zeros(spec.dim)
    for name in spec.blocks:
        v += blocks[name]
    if spec.norm == "none":
        return v * spec.scale
    norm = math.sqrt(float(v @ v))
    if norm == 0.0:
        raise ValidationError("texts produce no features under L2 normalization")
    return v / norm


def featurize_many(spec: FeatureSpec, pairs, table=None) -> np.ndarray:
    """Stack features for ``(reference, candidate[, record_id])`` tuples."""
    rows = []
    for item in pairs:
        ref, cand = item[0], item[1]
        rid = item[2] if len(item) > 2 else None
        rows.append(featurize(spec, ref, cand, table, rid))
    return np.vstack(rows) if rows else np.zeros((0, spec.dim))


# --------------------------------------------------------------------------
# External vectors
# --------------------------------------------------------------------------

def load_external(path, dim: int) -> dict[str, np.ndarray]:
    table: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ParseError("expected id<TAB>values", lineno)
            rid, values = line.split("\t", 1)
            try:
                v = np.array([float(x) for x in values.split(",")], dtype=float)
            except ValueError:
                raise ParseError(f"non-numeric value in row {rid!r}", lineno) from None
            if v.shape[0] != dim:
                raise ValidationError(
                    f"row {rid!r} has {v.shape[0]} values, expected {dim}", f"line {lineno}")
            if not np.all(np.isfinite(v)):
                raise ValidationError(f"row {rid!r} has non-finite values", f"line {lineno}")
            table[rid] = v
    return table


def write_external(table: Mapping[str, np.ndarray], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rid, v in table.items():
            fh.write(rid + "\t" + ",".join(repr(float(x)) for x in v) + "\n")
