"""Field encoding, coordinate-linear maps, and mod-p linear algebra."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mschemes.errors import InputError
from mschemes.gf_linalg import (
    Field,
    compose,
    enumerate_linmaps,
    identity_map,
    in_span,
    is_prime,
    linmap,
    nullspace_basis_mod,
    projection,
    rank_mod,
    rref_mod,
    span_basis,
    span_dim,
    span_points,
    summation,
    swap_map,
)

FIELDS = [(2, 3), (3, 2), (5, 2), (2, 5)]
field_ix = st.integers(0, len(FIELDS) - 1)


def test_is_prime():
    assert [n for n in range(2, 20) if is_prime(n)] == [2, 3, 5, 7, 11, 13, 17, 19]
    assert not is_prime(1)


def test_non_prime_field_rejected():
    with pytest.raises(InputError):
        Field(4, 2)


@given(field_ix, st.integers(0, 10 ** 6))
def test_encode_decode_roundtrip(ix, raw):
    f = Field(*FIELDS[ix])
    code = raw % f.q
    vec = f.decode(code)
    assert len(vec) == f.dim and all(0 <= v < f.ell for v in vec)
    assert f.encode(vec) == code


@given(field_ix, st.integers(0, 10 ** 6), st.integers(0, 10 ** 6))
def test_add_sub_neg(ix, ra, rb):
    f = Field(*FIELDS[ix])
    a, b = ra % f.q, rb % f.q
    s = f.add(a, b)
    assert f.sub(s, b) == a
    assert f.add(a, f.neg(a)) == f.zero
    # componentwise agreement with vector arithmetic
    va, vb = np.array(f.decode(a)), np.array(f.decode(b))
    assert f.encode(tuple((va + vb) % f.ell)) == s


@given(field_ix, st.lists(st.integers(0, 10 ** 6), min_size=1, max_size=4))
def test_tuple_codec_roundtrip(ix, raws):
    f = Field(*FIELDS[ix])
    pts = tuple(r % f.q for r in raws)
    code = f.encode_tuple(pts)
    assert tuple(f.decode_tuple(code, len(pts))) == pts


def test_projection_summation_swap():
    f = Field(3, 2)
    pts = (4, 7, 2)
    for i in (1, 2, 3):
        assert tuple(projection(3, i).apply(f, pts)) == (pts[i - 1],)
    total = f.add(f.add(4, 7), 2)
    assert tuple(summation(3).apply(f, pts)) == (total,)
    assert tuple(swap_map(3, 1, 3).apply(f, pts)) == (2, 7, 4)
    assert tuple(identity_map(3).apply(f, pts)) == pts


@given(field_ix, st.data())
def test_apply_batch_matches_apply(ix, data):
    f = Field(*FIELDS[ix])
    k, kp = data.draw(st.integers(1, 3)), data.draw(st.integers(1, 3))
    coeffs = data.draw(st.lists(
        st.lists(st.integers(0, f.ell - 1), min_size=kp, max_size=kp),
        min_size=k, max_size=k))
    tau = linmap(coeffs)
    rows = np.array([[data.draw(st.integers(0, f.q - 1)) for _ in range(k)]
                     for _ in range(3)], dtype=np.int64)
    batch = tau.apply_batch(f, rows)
    for r in range(3):
        assert tuple(batch[r]) == tuple(tau.apply(f, tuple(rows[r])))


@given(field_ix, st.data())
def test_compose_is_pointwise_composition(ix, data):
    f = Field(*FIELDS[ix])
    k, km, kp = 2, 3, 2
    c1 = data.draw(st.lists(st.lists(st.integers(0, f.ell - 1),
                                     min_size=km, max_size=km),
                            min_size=k, max_size=k))
    c2 = data.draw(st.lists(st.lists(st.integers(0, f.ell - 1),
                                     min_size=kp, max_size=kp),
                            min_size=km, max_size=km))
    first, second = linmap(c1), linmap(c2)
    both = compose(second, first)
    pts = tuple(data.draw(st.integers(0, f.q - 1)) for _ in range(k))
    assert tuple(both.apply(f, pts)) == \
        tuple(second.apply(f, tuple(first.apply(f, pts))))


def test_enumerate_linmaps_complete():
    f = Field(2, 3)
    maps = list(enumerate_linmaps(f, 2, 1))
    assert len(maps) == 2 ** 2
    assert len({m.coeffs for m in maps}) == len(maps)


@given(st.integers(0, 1), st.data())
def test_rank_nullspace(prime_ix, data):
    ell = [2, 3][prime_ix]
    rows = data.draw(st.integers(1, 4))
    cols = data.draw(st.integers(1, 4))
    mat = np.array([[data.draw(st.integers(0, ell - 1)) for _ in range(cols)]
                    for _ in range(rows)], dtype=np.int64)
    r = rank_mod(mat, ell)
    null = nullspace_basis_mod(mat, ell)
    assert r + len(null) == cols
    if len(null):
        assert not (mat @ null.T % ell).any()
    rr, piv = rref_mod(mat, ell)
    assert len(piv) == r
    # pivot columns of an rref are unit vectors
    for i, col in enumerate(piv):
        expect = np.zeros(rows, dtype=np.int64)
        expect[i] = 1
        assert np.array_equal(rr[:, col], expect)


def test_span_membership():
    f = Field(2, 4)
    codes = [3, 5]
    pts = span_points(f, codes)
    assert len(pts) == 2 ** span_dim(f, codes)
    basis = span_basis(f, codes)
    for c in range(f.q):
        assert in_span(f, basis, c) == (c in set(int(p) for p in pts))
