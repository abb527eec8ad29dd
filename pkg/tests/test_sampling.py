from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from claimrank.corpus import Utterance
from claimrank.errors import ConfigError, ValidationError
from claimrank.sampling import (BALANCED, ORIGINAL, UPSAMPLE, VariantSpec, make_variant,
                                undersample_balanced, upsample_positives)


def rows(labels, event="e"):
    return [Utterance(event, i + 1, "A", f"s{i}", l) for i, l in enumerate(labels)]


def table3_train():
    return rows([1] * 417 + [0] * 28298)


def positives(us):
    return sum(u.label for u in us)


@pytest.mark.parametrize("name, pos, share", [("x15", 6672, 19.1), ("x30", 12927, 31.4)])
def test_upsampling_matches_published_table(name, pos, share):
    out = make_variant(table3_train(), VariantSpec.parse(name))
    assert positives(out) == pos
    assert len(out) - positives(out) == 28298
    assert abs(100 * pos / len(out) - share) <= 0.05


def test_one_to_one_matches_published_table():
    out = make_variant(table3_train(), VariantSpec.parse("1:1", seed=3))
    assert positives(out) == 417 and len(out) == 834


def test_upsample_appends_copies_after_originals():
    base = rows([0, 1, 0, 1])
    out = upsample_positives(base, 2)
    assert out[:4] == base
    assert [u.line_no for u in out[4:]] == [2, 2, 4, 4]


def test_undersample_is_seeded_and_keeps_order():
    base = rows([0] * 30 + [1] * 5 + [0] * 30)
    a = undersample_balanced(base, 7)
    assert a == undersample_balanced(base, 7)
    assert a != undersample_balanced(base, 8)
    assert [u.line_no for u in a] == sorted(u.line_no for u in a)
    assert Counter(u.label for u in a) == {0: 5, 1: 5}


def test_undersample_edge_cases():
    with pytest.raises(ValidationError, match="cannot balance"):
        undersample_balanced(rows([0, 0, 0]), 0)
    few_neg = rows([1, 1, 0])
    assert undersample_balanced(few_neg, 0) == few_neg


def test_variant_spec_parsing():
    assert VariantSpec.parse("original").kind == ORIGINAL
    assert VariantSpec.parse("X30") == VariantSpec(UPSAMPLE, 30, 0)
    assert VariantSpec.parse("1to1", seed=2) == VariantSpec(BALANCED, 0, 2)
    assert [VariantSpec.parse(n).suffix for n in ("x15", "1:1", "original")] == ["x15", "1to1", "original"]
    with pytest.raises(ConfigError):
        VariantSpec.parse("x0")
    with pytest.raises(ConfigError):
        VariantSpec.parse("double")
    with pytest.raises(ConfigError):
        upsample_positives(rows([1]), 0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=60), st.integers(1, 40))
def test_upsample_counts_property(labels, k):
    base = rows(labels)
    out = upsample_positives(base, k)
    p = positives(base)
    assert positives(out) == (k + 1) * p
    assert len(out) - positives(out) == len(base) - p


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=60), st.integers(0, 2**32 - 1))
def test_undersample_property(labels, seed):
    base = rows(labels)
    if not any(labels):
        return
    out = undersample_balanced(base, seed)
    kept = {u.line_no for u in out}
    assert all(u.line_no in kept for u in base if u.label == 1)
    n_pos, n_neg = labels.count(1), labels.count(0)
    assert len(out) - positives(out) == min(n_pos, n_neg)
