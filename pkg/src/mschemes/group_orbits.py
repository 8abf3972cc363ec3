"""Matrix groups over F_ell and the partition systems their orbits induce.

Blocks at arity k are the orbits of the diagonal action of G <= GL(V) on
S^k.  Equivariance of every coordinate-linear map makes these partitions
satisfy the P-axioms at any declared depth, which is what lets deep
instances exist without materializing S^m: levels are computed on demand and
fibre restrictions are the orbit partitions of point stabilizers.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .caps import DEFAULT_CAP_GROUP
from .errors import CapExceeded, InputError, NotInGroup
from .gf_linalg import Field, rank_mod
from .scheme_core import Scheme, SchemeInstance, TuplePartition

# primitive polynomials x^d + ... used for default multiplicative (Singer)
# groups; coefficients of the monic polynomial, constant term last
DEFAULT_PRIMITIVE_POLY = {
    (2, 2): (1, 1, 1),
    (2, 3): (1, 0, 1, 1),
    (2, 4): (1, 0, 0, 1, 1),
    (2, 5): (1, 0, 0, 1, 0, 1),
    (2, 6): (1, 0, 0, 0, 0, 1, 1),
    (2, 8): (1, 0, 0, 0, 1, 1, 1, 0, 1),
    (2, 10): (1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1),
    (3, 2): (1, 1, 2),
    (3, 3): (1, 0, 2, 1),
    (3, 4): (1, 0, 0, 1, 2),
}


def _mat_key(mat: np.ndarray):
    return tuple(int(x) for x in mat.reshape(-1))


# stabilizers are subgroups listed in full; remember their element lists so
# nested fibre computations never re-run the closure BFS
_STABILIZER_CACHE: dict = {}
_ELEMENTS_KNOWN: dict = {}


@dataclass(frozen=True)
class MatrixGroup:
    """Subgroup of GL_dim(F_ell) given by generators; elements enumerated lazily."""

    field: Field
    generators: tuple  # tuple of flat coefficient tuples, row-major

    @staticmethod
    def from_matrices(field: Field, mats) -> "MatrixGroup":
        gens = []
        for m in mats:
            arr = np.array(m, dtype=np.int64) % field.ell
            if arr.shape != (field.dim, field.dim):
                raise InputError(f"generator shape {arr.shape} != ({field.dim},{field.dim})")
            if rank_mod(arr, field.ell) != field.dim:
                raise NotInGroup("generator is singular")
            gens.append(_mat_key(arr))
        return MatrixGroup(field, tuple(sorted(set(gens))))

    def gen_arrays(self):
        d = self.field.dim
        return [np.array(g, dtype=np.int64).reshape(d, d) for g in self.generators]

    def elements(self, cap: int = DEFAULT_CAP_GROUP):
        """All elements by closure BFS, as a sorted list of flat tuples."""
        return _group_elements(self, cap)

    @property
    def order(self) -> int:
        return len(self.elements())

    # ---- actions ------------------------------------------------------

    def point_perm(self, mat: np.ndarray) -> np.ndarray:
        """Permutation of point codes induced by x -> M x."""
        f = self.field
        digs = f.decode_batch(np.arange(f.q))
        return f.encode_batch((digs @ mat.T) % f.ell)

    def act_code(self, mat: np.ndarray, code: int) -> int:
        f = self.field
        vec = (mat @ f.decode_batch([code])[0]) % f.ell
        return int(f.encode_batch(vec.reshape(1, -1))[0])

    def close_set(self, codes) -> tuple:
        """Smallest G-stable superset of the given point codes, sorted."""
        perms = [self.point_perm(np.array(g, dtype=np.int64).reshape(self.field.dim, -1))
                 for g in self.generators]
        out = set(int(c) for c in codes)
        frontier = list(out)
        while frontier:
            nxt = []
            for c in frontier:
                for perm in perms:
                    img = int(perm[c])
                    if img not in out:
                        out.add(img)
                        nxt.append(img)
            frontier = nxt
        return tuple(sorted(out))

    def stabilizer(self, codes) -> "MatrixGroup":
        """Pointwise stabilizer of the given point codes (full element list)."""
        codes = tuple(int(c) for c in codes)
        key = (self.field.ell, self.field.dim, self.generators, codes)
        hit = _STABILIZER_CACHE.get(key)
        if hit is not None:
            return hit
        f = self.field
        els = self.elements()
        mats = np.array(els, dtype=np.int64).reshape(len(els), f.dim, f.dim)
        keep = np.ones(len(els), dtype=bool)
        for c in codes:
            vec = f.decode_batch([c])[0]
            imgs = f.encode_batch((mats[keep] @ vec) % f.ell)
            sel = np.nonzero(keep)[0]
            keep[sel[imgs != c]] = False
        kept = tuple(sorted(els[i] for i in np.nonzero(keep)[0]))
        out = MatrixGroup(f, kept)
        _ELEMENTS_KNOWN[out] = kept
        _STABILIZER_CACHE[key] = out
        return out

    # ---- group-spec JSON ----------------------------------------------

    @staticmethod
    def from_spec(field: Field, obj) -> "MatrixGroup":
        if isinstance(obj, str):
            obj = json.loads(obj)
        kind = obj.get("kind")
        if kind == "trivial":
            return trivial_group(field)
        if kind == "gl":
            return gl_group(field)
        if kind == "singer":
            poly = tuple(obj["poly"]) if obj.get("poly") else None
            return singer_group(field, poly)
        if kind == "custom":
            return MatrixGroup.from_matrices(field, obj["generators"])
        raise InputError(f"unknown group kind {kind!r}")


@lru_cache(maxsize=128)
def _group_elements_cached(group: MatrixGroup, cap: int):
    f = group.field
    d = f.dim
    ident = _mat_key(np.eye(d, dtype=np.int64))
    seen = {ident}
    frontier = [ident]
    gens = group.gen_arrays()
    while frontier:
        nxt = []
        for key in frontier:
            mat = np.array(key, dtype=np.int64).reshape(d, d)
            for g in gens:
                prod = _mat_key((g @ mat) % f.ell)
                if prod not in seen:
                    seen.add(prod)
                    if len(seen) > cap:
                        raise CapExceeded("group order", len(seen), cap)
                    nxt.append(prod)
        frontier = nxt
    return tuple(sorted(seen))


def _group_elements(group: MatrixGroup, cap: int):
    known = _ELEMENTS_KNOWN.get(group)
    if known is not None:
        return list(known)
    return list(_group_elements_cached(group, cap))


# ---------------------------------------------------------------------------
# standard groups
# ---------------------------------------------------------------------------


def trivial_group(field: Field) -> MatrixGroup:
    return MatrixGroup.from_matrices(field, [np.eye(field.dim, dtype=np.int64)])


def gl_group(field: Field) -> MatrixGroup:
    """GL_dim(F_ell) from the standard two generators."""
    d, ell = field.dim, field.ell
    if d == 1:
        lam = primitive_root(ell)
        return MatrixGroup.from_matrices(field, [np.array([[lam]])])
    # a transvection and the coordinate cycle generate SL (up to the sign of
    # the cycle); diag(lambda, 1, ..., 1) with lambda primitive makes the
    # determinant surjective, so together they generate GL
    lam = primitive_root(ell)
    trans = np.eye(d, dtype=np.int64)
    trans[0, 1] = 1
    cyc = np.zeros((d, d), dtype=np.int64)
    for i in range(1, d):
        cyc[i, i - 1] = 1
    cyc[0, d - 1] = 1
    gens = [trans, cyc]
    if lam != 1:
        diag = np.eye(d, dtype=np.int64)
        diag[0, 0] = lam
        gens.append(diag)
    return MatrixGroup.from_matrices(field, gens)


def primitive_root(ell: int) -> int:
    if ell == 2:
        return 1
    for g in range(2, ell):
        seen = set()
        x = 1
        for _ in range(ell - 1):
            x = x * g % ell
            seen.add(x)
        if len(seen) == ell - 1:
            return g
    raise InputError(f"no primitive root mod {ell}")


def companion_matrix(field: Field, poly) -> np.ndarray:
    """Companion matrix of a monic degree-d polynomial (constant term last)."""
    d = field.dim
    if len(poly) != d + 1 or poly[0] != 1:
        raise InputError("polynomial must be monic of degree dim")
    mat = np.zeros((d, d), dtype=np.int64)
    for i in range(1, d):
        mat[i, i - 1] = 1
    for i in range(d):
        mat[i, d - 1] = (-poly[d - i]) % field.ell
    return mat


def singer_group(field: Field, poly=None) -> MatrixGroup:
    """Cyclic group generated by multiplication by a field generator."""
    if poly is None:
        try:
            poly = DEFAULT_PRIMITIVE_POLY[(field.ell, field.dim)]
        except KeyError:
            raise InputError(
                f"no default primitive polynomial for (ell={field.ell}, dim={field.dim})"
            ) from None
    return MatrixGroup.from_matrices(field, [companion_matrix(field, poly)])


def frobenius_matrix(field: Field, poly=None) -> np.ndarray:
    """Matrix of z -> z^ell on F_{ell^dim} in the power basis of the polynomial."""
    if poly is None:
        poly = DEFAULT_PRIMITIVE_POLY[(field.ell, field.dim)]
    comp = companion_matrix(field, poly)
    d = field.dim
    cols = []
    for i in range(d):
        # image of basis vector z^i is z^{i*ell} = comp^{i*ell} applied to e_0
        power = np.eye(d, dtype=np.int64)
        for _ in range(i * field.ell):
            power = (comp @ power) % field.ell
        cols.append(power[:, 0])
    return np.stack(cols, axis=1) % field.ell


def semilinear_group(field: Field, poly=None) -> MatrixGroup:
    """Singer cycle extended by the Frobenius map (a Frobenius-type group)."""
    if poly is None:
        poly = DEFAULT_PRIMITIVE_POLY[(field.ell, field.dim)]
    return MatrixGroup.from_matrices(
        field, [companion_matrix(field, poly), frobenius_matrix(field, poly)]
    )


# ---------------------------------------------------------------------------
# orbit partitions / backend
# ---------------------------------------------------------------------------


class OrbitBackend:
    """Lazy level/fibre provider for orbit-induced schemes."""

    def __init__(self, group: MatrixGroup):
        self.group = group

    def _gen_perms(self, instance: SchemeInstance):
        pos = instance.pos_of()
        perms = []
        for g in self.group.gen_arrays():
            perm = self.group.point_perm(g)
            s_arr = np.array(instance.s_codes, dtype=np.int64)
            img = perm[s_arr]
            p = pos[img]
            if (p < 0).any():
                raise NotInGroup("S is not stable under the group")
            perms.append(p)  # position-in-S permutation
        return perms

    def orbit_partition_raw(self, instance: SchemeInstance, k: int) -> np.ndarray:
        instance.check_tuple_cap(k)
        n = instance.n
        count = n ** k
        idx = np.arange(count, dtype=np.int64)
        digits = [(idx // n ** (k - 1 - i)) % n for i in range(k)]
        radix = [n ** (k - 1 - i) for i in range(k)]
        moves = []
        for p in self._gen_perms(instance):
            moved = np.zeros(count, dtype=np.int64)
            for i in range(k):
                moved += p[digits[i]] * radix[i]
            moves.append(moved)
        labels = idx.copy()
        changed = True
        while changed:
            changed = False
            for moved in moves:
                pulled = labels[moved]
                upd = np.minimum(labels, pulled)
                # also propagate backwards along the permutation
                np.minimum.at(upd, moved, labels)
                if not np.array_equal(upd, labels):
                    labels = upd
                    changed = True
        return labels

    def stabilizer_backend(self, pts):
        return OrbitBackend(self.group.stabilizer(pts))


def build_orbit_scheme(group: MatrixGroup, seed_codes, m: int,
                       materialize: bool = True) -> Scheme:
    """Scheme whose blocks are G-orbits on powers of the closure of the seed.

    With materialize=True all levels are computed now (cap-guarded) and the
    result has no backend; otherwise levels appear on demand and any declared
    depth is allowed.
    """
    s_codes = group.close_set(seed_codes)
    inst = SchemeInstance(group.field, s_codes)
    backend = OrbitBackend(group)
    if not materialize:
        return Scheme(inst, m, backend=backend)
    levels = [
        TuplePartition.from_raw(inst, k, backend.orbit_partition_raw(inst, k))
        for k in range(1, m + 1)
    ]
    return Scheme(inst, m, levels=levels)
