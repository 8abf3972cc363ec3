"""Sumset arithmetic, additive energy, covering and doubling certificates."""
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from mschemes.addcomb import (
    PointSet,
    additive_energy,
    additive_energy_oracle,
    check_covering,
    check_freiman_ruzsa,
    check_plunnecke,
    covering_bound,
    covering_number,
    density,
    diff_histogram,
    difference_set,
    is_coset,
    iterated_sumset,
    negate,
    subgroup_generated,
    sum_histogram,
    sumset,
    symmetrized,
)
from mschemes.errors import FieldMismatch, PreconditionUnmet
from mschemes.gf_linalg import Field, span_points

F23 = Field(2, 3)
F32 = Field(3, 2)

subsets23 = st.sets(st.integers(0, 7), min_size=1).map(sorted)
subsets32 = st.sets(st.integers(0, 8), min_size=1).map(sorted)


def ps(f, codes):
    return PointSet.from_codes(f, codes)


@given(subsets32, subsets32)
def test_sumset_definition(a_codes, b_codes):
    a, b = ps(F32, a_codes), ps(F32, b_codes)
    expected = {F32.add(x, y) for x in a_codes for y in b_codes}
    assert set(sumset(a, b).codes) == expected
    assert set(sumset(b, a).codes) == expected
    assert len(sumset(a, b)) >= max(len(a), len(b))


@given(subsets32, subsets32)
def test_difference_is_sum_of_negation(a_codes, b_codes):
    a, b = ps(F32, a_codes), ps(F32, b_codes)
    assert set(difference_set(a, b).codes) == set(sumset(a, negate(b)).codes)


@given(subsets32)
def test_iterated_sumset(a_codes):
    a = ps(F32, a_codes)
    assert set(iterated_sumset(2, a).codes) == set(sumset(a, a).codes)
    assert set(iterated_sumset(1, a).codes) == set(a.codes)


@given(subsets32)
def test_symmetrized_contains_both_signs(a_codes):
    s = symmetrized(ps(F32, a_codes))
    assert set(s.codes) >= set(a_codes)
    assert {F32.neg(c) for c in s.codes} == set(s.codes)


@given(subsets23)
def test_energy_equals_oracle_and_histogram(a_codes):
    a = ps(F23, a_codes)
    hist = sum_histogram(a, a)
    assert sum(hist.values()) == len(a) ** 2
    assert additive_energy(a) == sum(c * c for c in hist.values())
    assert additive_energy(a) == additive_energy_oracle(a)


@given(subsets23)
def test_diff_histogram_mass(a_codes):
    a = ps(F23, a_codes)
    d = diff_histogram(a, a)
    assert sum(d.values()) == len(a) ** 2
    assert d.get(F23.zero, 0) >= len(a)


@given(subsets32)
def test_subgroup_generated_is_a_group(a_codes):
    h = set(subgroup_generated(ps(F32, a_codes)).codes)
    assert F32.zero in h
    assert all(F32.add(x, y) in h for x in h for y in h)
    assert h == {int(c) for c in span_points(F32, a_codes)}


def test_is_coset_on_translates():
    f = Field(2, 4)
    sub = [int(c) for c in span_points(f, [3, 5])]
    assert is_coset(ps(f, sub))
    shifted = [f.add(8, c) for c in sub]
    assert is_coset(ps(f, shifted))
    assert additive_energy(ps(f, shifted)) == len(sub) ** 3
    assert not is_coset(ps(f, [1, 2, 3]))


@given(subsets32)
def test_covering_number_definition(a_codes):
    a = ps(F32, a_codes)
    h = covering_number(a)
    target = set(subgroup_generated(a).codes)
    base = symmetrized(a)
    base = PointSet.from_codes(F32, set(base.codes) | {F32.zero})
    assert set(iterated_sumset(h, base).codes) == target
    if h > 1:
        assert set(iterated_sumset(h - 1, base).codes) != target
    assert h <= covering_bound(a)


@given(subsets23)
def test_certificates_hold(a_codes):
    a = ps(F23, a_codes)
    _, _, cov_ok = check_covering(a)
    assert cov_ok
    _, fr_ok = check_freiman_ruzsa(a)
    assert fr_ok
    _, pl_ok = check_plunnecke(a, a, 3)
    assert pl_ok


def test_plunnecke_rejects_false_constant():
    a = ps(F23, [1, 2, 4])
    # K below the true sumset ratio violates the hypothesis
    with pytest.raises(PreconditionUnmet):
        check_plunnecke(a, a, 2, K=Fraction(1, 100))


def test_density_and_json_roundtrip():
    a = ps(F23, [1, 2, 3])
    assert density(a) == Fraction(3, 4)  # span of {1,2,3} is {0,1,2,3}
    b = PointSet.from_json(a.to_json())
    assert b.field == a.field and set(b.codes) == set(a.codes)


def test_field_mismatch_rejected():
    with pytest.raises(FieldMismatch):
        sumset(ps(F23, [1]), ps(F32, [1]))
