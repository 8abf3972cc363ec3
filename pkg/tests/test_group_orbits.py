"""Matrix groups over F_ell, orbit partitions, and orbit-backed schemes."""
import numpy as np
import pytest

from mschemes.errors import InputError
from mschemes.gf_linalg import Field
from mschemes.group_orbits import (
    MatrixGroup,
    build_orbit_scheme,
    companion_matrix,
    frobenius_matrix,
    gl_group,
    semilinear_group,
    singer_group,
    trivial_group,
)


def test_gl_orders():
    # |GL_d(F_2)| = prod (2^d - 2^i)
    assert gl_group(Field(2, 2)).order == 6
    assert gl_group(Field(2, 3)).order == 168
    assert gl_group(Field(3, 2)).order == 48


def test_singer_is_cyclic_transitive():
    for ell, dim in [(2, 3), (3, 2), (2, 4)]:
        f = Field(ell, dim)
        g = singer_group(f)
        assert g.order == f.q - 1
        # transitive on nonzero vectors: orbit of e_0 is everything nonzero
        assert g.close_set([1]) == tuple(range(1, f.q))


def test_orbit_stabilizer_counting():
    f = Field(2, 3)
    g = gl_group(f)
    for code in (1, 5):
        orbit = g.close_set([code])
        stab = g.stabilizer([code])
        assert len(orbit) * stab.order == g.order


def test_stabilizer_fixes_points():
    f = Field(2, 3)
    g = gl_group(f)
    stab = g.stabilizer([1, 2])
    for key in stab.generators:
        mat = np.array(key, dtype=np.int64).reshape(f.dim, f.dim)
        assert g.act_code(mat, 1) == 1 and g.act_code(mat, 2) == 2


def test_frobenius_has_order_dim():
    f = Field(2, 4)
    fr = frobenius_matrix(f)
    p = np.eye(f.dim, dtype=np.int64)
    for k in range(1, f.dim + 1):
        p = (fr @ p) % f.ell
        if np.array_equal(p, np.eye(f.dim, dtype=np.int64)):
            break
    assert k == f.dim


def test_companion_matrix_is_primitive():
    f = Field(2, 4)
    c = companion_matrix(f, (1, 0, 0, 1, 1))  # x^4 + x + 1
    p = np.eye(f.dim, dtype=np.int64)
    orders = []
    for k in range(1, f.q):
        p = (c @ p) % f.ell
        if np.array_equal(p, np.eye(f.dim, dtype=np.int64)):
            orders.append(k)
    assert orders == [f.q - 1]


def test_semilinear_group_order():
    f = Field(2, 3)
    # Singer cycle (order 7) extended by Frobenius (order 3)
    assert semilinear_group(f).order == 21


def test_trivial_group_and_finest_orbits():
    f = Field(2, 2)
    g = trivial_group(f)
    assert g.order == 1
    sch = build_orbit_scheme(g, [1, 2, 3], 2)
    assert sch.level(2).is_discrete()


def test_orbit_scheme_blocks_are_orbits():
    f = Field(2, 3)
    g = gl_group(f)
    sch = build_orbit_scheme(g, [1], 2, materialize=True)
    inst = sch.instance
    els = [np.array(e, dtype=np.int64).reshape(f.dim, f.dim)
           for e in g.elements()]
    part = sch.level(2)
    # diagonal action orbit of a representative equals its block
    for b in range(part.num_blocks):
        rep = part.block_tuples(b)[0]
        orbit = {
            inst.tuple_index(tuple(g.act_code(mat, c) for c in rep))
            for mat in els
        }
        assert orbit == {int(i) for i in part.blocks()[b]}


def test_lazy_and_materialized_agree():
    from mschemes.instances import gl_orbit_scheme

    lazy = gl_orbit_scheme(2, 2, 3, lazy=True)
    full = gl_orbit_scheme(2, 2, 3, lazy=False)
    for k in (1, 2, 3):
        assert np.array_equal(lazy.level(k).bid, full.level(k).bid)


def test_from_spec_kinds():
    f = Field(2, 3)
    assert MatrixGroup.from_spec(f, {"kind": "trivial"}).order == 1
    assert MatrixGroup.from_spec(f, {"kind": "gl"}).order == 168
    assert MatrixGroup.from_spec(f, {"kind": "singer"}).order == 7
    eye = np.eye(3, dtype=np.int64)
    custom = MatrixGroup.from_spec(
        f, {"kind": "custom", "generators": [eye.tolist()]})
    assert custom.order == 1
    with pytest.raises(InputError):
        MatrixGroup.from_spec(f, {"kind": "sporadic"})


def test_singular_generator_rejected():
    f = Field(2, 2)
    with pytest.raises(InputError):
        MatrixGroup.from_matrices(f, [np.zeros((2, 2), dtype=np.int64)])
