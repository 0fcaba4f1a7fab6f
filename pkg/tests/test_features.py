import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fgreward.errors import ParseError, ValidationError
from fgreward.features import (
    BLOCKS,
    FeatureSpec,
    bucket,
    feature_blocks,
    featurize,
    load_external,
    ngrams,
    write_external,
)

REF = "Small left pleural effusion. Heart size is normal."


def test_identical_texts_zero_difference():
    blocks = feature_blocks(FeatureSpec(), REF, REF)
    assert not blocks["added"].any() and not blocks["removed"].any()
    assert blocks["cand"].sum() > 0
    assert not featurize(FeatureSpec(), REF, REF).any()


def test_deterministic():
    for spec in (FeatureSpec(), FeatureSpec.full()):
        a = featurize(spec, REF, "Small right pleural effusion.")
        b = featurize(spec, REF, "Small right pleural effusion.")
        assert a.tobytes() == b.tobytes()


def test_ngrams_by_hand():
    grams = ngrams("Left effusion", word_n=(1, 2), char_n=(3,))
    assert grams["w:left"] == 1 and grams["w:left effusion"] == 1
    assert grams["c: le"] == 1 and grams["c:ft "] == 1
    assert sum(1 for g in grams if g.startswith("c:")) == 4 + 8


# n-grams that contain the swapped word in "left effusion" vs "right effusion"
LEFT = ["w:left", "w:left effusion",
        "c: le", "c:lef", "c:eft", "c:ft ", "c: lef", "c:left", "c:eft "]
RIGHT = ["w:right", "w:right effusion",
         "c: ri", "c:rig", "c:igh", "c:ght", "c:ht ", "c: rig", "c:righ", "c:ight", "c:ght "]


@pytest.mark.parametrize("blocks", [("added", "removed"), BLOCKS])
def test_one_token_change_touches_only_its_buckets(blocks):
    spec = FeatureSpec(blocks=blocks, norm="none", scale=1.0)
    ref = "left effusion"
    a = featurize(spec, ref, "left effusion")
    b = featurize(spec, ref, "right effusion")
    allowed = {bucket(tag, g, spec.dim) for tag in blocks for g in LEFT + RIGHT}
    changed = set(np.flatnonzero(a != b))
    assert changed and changed <= allowed


def test_full_spec_is_unit_norm():
    v = featurize(FeatureSpec.full(), REF, "Heart size is normal.")
    assert abs(np.linalg.norm(v) - 1) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.text("abcdefg .", min_size=1, max_size=40), st.text("abcdefg .", min_size=1, max_size=40))
def test_norm_bound(ref, cand):
    spec = FeatureSpec.full(dim=64)
    try:
        v = featurize(spec, ref, cand)
    except ValidationError:
        return
    assert np.all(np.isfinite(v))
    assert abs(np.linalg.norm(v) - 1) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["left", "right", "small", "large", "effusion", "is", "no"]),
                min_size=1, max_size=8),
       st.sampled_from(["left", "right", "small", "large", "effusion", "is", "no", "new"]))
def test_sensitivity(words, extra):
    ref = " ".join(words)
    a = featurize(FeatureSpec(), ref, ref)
    b = featurize(FeatureSpec(), ref, ref + " " + extra)
    assert not np.array_equal(a, b)


def test_empty_text_rejected():
    with pytest.raises(ValidationError):
        featurize(FeatureSpec(), "  ", "x")


def test_spec_validation():
    for kw in ({"dim": 4}, {"dim": 100}, {"blocks": ()}, {"norm": "l1"}, {"variant": "bert"}):
        with pytest.raises(ValidationError):
            FeatureSpec(**kw)
    assert FeatureSpec(variant="external", dim=100).dim == 100
    spec = FeatureSpec.full(dim=256)
    assert FeatureSpec.from_dict(spec.to_dict()) == spec


def test_external_table(tmp_path):
    rng = np.random.default_rng(0)
    table = {f"r{k}": rng.normal(size=16) for k in range(3)}
    path = tmp_path / "vec.tsv"
    write_external(table, path)
    back = load_external(path, 16)
    assert len(back) == 3
    for k in table:
        assert back[k].tobytes() == table[k].tobytes()
    spec = FeatureSpec(variant="external", dim=16)
    assert featurize(spec, "a", "b", back, "r1").tobytes() == table["r1"].tobytes()
    with pytest.raises(LookupError, match="r9"):
        featurize(spec, "a", "b", back, "r9")


def test_external_dim_mismatch_names_row(tmp_path):
    path = tmp_path / "vec.tsv"
    path.write_text("good\t" + ",".join(["0.5"] * 16) + "\nshort\t" + ",".join(["1"] * 15) + "\n")
    with pytest.raises(ValidationError, match="short"):
        load_external(path, 16)
    path.write_text("bad row\n")
    with pytest.raises(ParseError):
        load_external(path, 16)
