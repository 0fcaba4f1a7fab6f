import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fgreward.errors import StructuralError, ValidationError
from fgreward.scoring import (
    Criterion,
    ScoringSystem,
    TierBand,
    dump_system,
    load_system,
    loads_system,
    quality_score,
    sub_quality,
    to_quality,
    total_score,
)


def test_weighted_total_matches_formula(mrscore7):
    assert total_score(mrscore7, [1, 0, 0, 1, 0, 0, 0]) == 60


def test_count_totals(radcliq6):
    assert total_score(radcliq6, [0] * 6) == 0
    assert total_score(radcliq6, [1, 2, 0, 0, 1, 0]) == 4


def test_quality_orientation(radcliq6, mrscore7):
    assert quality_score(radcliq6, [0] * 6) == 12
    assert quality_score(radcliq6, [1, 2, 0, 0, 1, 0]) == 8
    assert quality_score(mrscore7, [0] * 7) == 100
    np.testing.assert_array_equal(to_quality(radcliq6, [0, 4, 12]), [12, 8, 0])
    np.testing.assert_array_equal(to_quality(mrscore7, [60, 100]), [60, 100])


def test_presets(radcliq6, mrscore7):
    assert radcliq6.n == 6 and radcliq6.formula == "sum_of_errors"
    assert all(c.kind == "error_count" and c.max_count == 2 for c in radcliq6.criteria)
    assert radcliq6.orientation == "lower_is_better"
    assert radcliq6.quality_range == (0, 12)
    assert mrscore7.n == 7 and all(c.kind == "binary_error" for c in mrscore7.criteria)
    assert list(mrscore7.weights) == [30, 20, 20, 10, 10, 5, 5]
    assert mrscore7.orientation == "higher_is_better"
    assert mrscore7.quality_range == (0, 100)


def _doc(weight=10, formula="hundred_minus_weighted_sum", ids=("a", "b")):
    crit = "\n".join(f"  - {{id: {i}, kind: binary_error, weight: {weight}}}" for i in ids)
    return f"name: custom\nformula: {formula}\ncriteria:\n{crit}\n"


def test_negative_weight_rejected_with_path():
    with pytest.raises(ValidationError, match=r"criteria\[0\]\.weight"):
        loads_system(_doc(weight=-1))


def test_duplicate_ids_and_unknown_formula():
    with pytest.raises(ValidationError, match=r"criteria\[1\]\.id"):
        loads_system(_doc(ids=("a", "a")))
    with pytest.raises(ValidationError, match="formula"):
        loads_system(_doc(formula="product"))


def test_custom_system_range():
    system = loads_system(_doc(weight=15))
    assert system.quality_range == (70, 100)
    assert total_score(system, [1, 1]) == 70


def test_invalid_subs(radcliq6, mrscore7):
    with pytest.raises(StructuralError):
        total_score(radcliq6, [0] * 5)
    with pytest.raises(ValidationError, match="wrong_location"):
        total_score(radcliq6, [0, 0, 3, 0, 0, 0])
    with pytest.raises(ValidationError):
        total_score(mrscore7, [0.5, 0, 0, 0, 0, 0, 0])


@pytest.mark.parametrize("name", ["radcliq6", "mrscore7"])
def test_round_trip(name):
    system = load_system(name)
    assert loads_system(dump_system(system)) == system


def test_load_from_file_and_config_dir(tmp_path, monkeypatch, mrscore7):
    path = tmp_path / "mine.yaml"
    path.write_text(dump_system(mrscore7))
    assert load_system(str(path)) == mrscore7
    monkeypatch.setenv("FGREWARD_CONFIG_DIR", str(tmp_path))
    assert load_system("mine") == mrscore7


def test_tier_overlap_rejected():
    with pytest.raises(ValidationError, match="overlaps"):
        ScoringSystem("x", [Criterion("a", max_count=4)], "sum_of_errors",
                      tiers=[TierBand("a", 0, 2), TierBand("b", 2, 4)])


def test_tier_lookup(radcliq6, mrscore7):
    assert [radcliq6.tier_of(t) for t in (0, 2, 3, 4, 5, 6)] == \
        ["high", "high", "mid", "mid", "low", "low"]
    assert [mrscore7.tier_of(t) for t in (0, 39, 40, 69, 70, 100)] == \
        ["low", "low", "mid", "mid", "high", "high"]


def _subs(system):
    return st.tuples(*[st.integers(0, c.max_value) for c in system.criteria])


RAD = load_system("radcliq6")
MR = load_system("mrscore7")


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_single_error_strictly_lowers_quality(data):
    for system in (RAD, MR):
        subs = list(data.draw(_subs(system)))
        free = [j for j, c in enumerate(system.criteria) if subs[j] < c.max_value]
        if not free:
            continue
        j = data.draw(st.sampled_from(free))
        worse = subs.copy()
        worse[j] += 1
        if system.criteria[j].weight > 0:
            assert quality_score(system, worse) < quality_score(system, subs)


@settings(max_examples=200, deadline=None)
@given(_subs(RAD), _subs(RAD))
def test_total_linear_and_sub_quality_sums(a, b):
    a, b = np.array(a), np.array(b)
    # linearity over the integer lattice inside the legal range
    mid = np.minimum(a + b, 2)
    assert total_score(RAD, mid) == mid.sum()
    assert sub_quality(RAD, a).sum() == quality_score(RAD, a) - RAD.quality_range[1]


@settings(max_examples=200, deadline=None)
@given(_subs(MR))
def test_weighted_sub_quality_sums(s):
    assert 100 + sub_quality(MR, s).sum() == total_score(MR, s)


@settings(max_examples=50, deadline=None)
@given(st.lists(_subs(RAD), min_size=1, max_size=8))
def test_best_report_is_fewest_errors(reports):
    q = [quality_score(RAD, r) for r in reports]
    t = [total_score(RAD, r) for r in reports]
    assert int(np.argmax(q)) == int(np.argmin(t))
