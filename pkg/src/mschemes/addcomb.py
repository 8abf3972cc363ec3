"""Additive combinatorics over F_ell^d: sumsets, energy, covering, growth checks.

All ratio/density comparisons are exact (fractions.Fraction / big integers);
nothing here touches floating point.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from .errors import EmptyReference, FieldMismatch, InputError, PreconditionUnmet
from .gf_linalg import Field, span_basis, span_dim, span_points


@dataclass(frozen=True)
class PointSet:
    """A finite subset of F_ell^dim, stored as sorted point codes."""

    field: Field
    codes: tuple

    @staticmethod
    def from_codes(field: Field, codes: Iterable[int]) -> "PointSet":
        cs = sorted(set(int(c) for c in codes))
        for c in cs:
            if not (0 <= c < field.q):
                raise InputError(f"point code {c} outside field")
        return PointSet(field, tuple(cs))

    @staticmethod
    def from_vectors(field: Field, vectors) -> "PointSet":
        return PointSet.from_codes(field, (field.encode(v) for v in vectors))

    def __len__(self):
        return len(self.codes)

    def __contains__(self, code):
        return code in set(self.codes)

    def vectors(self):
        return [self.field.decode(c) for c in self.codes]

    # ---- JSON interchange --------------------------------------------

    def to_json(self) -> str:
        obj = {
            "ell": self.field.ell,
            "dim": self.field.dim,
            "points": [list(v) for v in self.vectors()],
        }
        return json.dumps(obj, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "PointSet":
        try:
            obj = json.loads(text)
            field = Field(int(obj["ell"]), int(obj["dim"]))
            return PointSet.from_vectors(field, obj["points"])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad point-set JSON: {exc}") from exc


def _require_same_field(*sets: PointSet):
    f = sets[0].field
    for s in sets[1:]:
        if s.field != f:
            raise FieldMismatch("point sets over different fields")
    return f


def sumset(a: PointSet, b: PointSet) -> PointSet:
    field = _require_same_field(a, b)
    if not a.codes or not b.codes:
        return PointSet(field, ())
    da = field.decode_batch(a.codes)
    db = field.decode_batch(b.codes)
    sums = (da[:, None, :] + db[None, :, :]) % field.ell
    codes = field.encode_batch(sums.reshape(-1, field.dim))
    return PointSet.from_codes(field, codes.tolist())


def negate(a: PointSet) -> PointSet:
    codes = a.field.encode_batch((-a.field.decode_batch(a.codes)) % a.field.ell)
    return PointSet.from_codes(a.field, codes.tolist())


def difference_set(a: PointSet, b: PointSet) -> PointSet:
    return sumset(a, negate(b))


def iterated_sumset(k: int, a: PointSet) -> PointSet:
    """kA = A + ... + A (k summands), k >= 1."""
    if k < 1:
        raise InputError("iterated sumset needs k >= 1")
    out = a
    for _ in range(k - 1):
        out = sumset(out, a)
    return out


def symmetrized(a: PointSet) -> PointSet:
    """A^± = A ∪ (−A) ∪ {0}."""
    return PointSet.from_codes(a.field, set(a.codes) | set(negate(a).codes) | {0})


def subgroup_generated(a: PointSet) -> PointSet:
    """⟨A⟩: over a prime field this is the F_ell-span."""
    if not a.codes:
        raise EmptyReference("subgroup generated by empty set")
    return PointSet(a.field, tuple(span_points(a.field, a.codes)))


def density_in(a: PointSet, b: PointSet) -> Fraction:
    """mu_B(A) = |A ∩ B| / |B|, exact."""
    _require_same_field(a, b)
    if not b.codes:
        raise EmptyReference("density relative to empty set")
    inter = len(set(a.codes) & set(b.codes))
    return Fraction(inter, len(b.codes))


def density(a: PointSet) -> Fraction:
    """mu(A) = |A| / |⟨A⟩|."""
    return density_in(a, subgroup_generated(a))


def sum_histogram(a: PointSet, b: PointSet):
    """dict z -> #{(x,y) in A x B : x + y = z}."""
    field = _require_same_field(a, b)
    da = field.decode_batch(a.codes)
    db = field.decode_batch(b.codes)
    sums = (da[:, None, :] + db[None, :, :]) % field.ell
    codes = field.encode_batch(sums.reshape(-1, field.dim))
    vals, counts = np.unique(codes, return_counts=True)
    return {int(z): int(c) for z, c in zip(vals, counts)}


def diff_histogram(a: PointSet, b: PointSet):
    """dict z -> #{(x,y) in A x B : x - y = z}."""
    return sum_histogram(a, negate(b))


def additive_energy(a: PointSet) -> int:
    """E(A) = #{(a1,a2,a3,a4) in A^4 : a1 + a2 = a3 + a4} = sum_z r(z)^2."""
    hist = sum_histogram(a, a)
    return sum(c * c for c in hist.values())


def additive_energy_oracle(a: PointSet) -> int:
    """Independent quadruple-enumeration oracle for E(A); literal O(|A|^4) loop."""
    field = a.field
    digs = [field.decode(c) for c in a.codes]
    n = len(digs)
    ell = field.ell
    total = 0
    for i in range(n):
        for j in range(n):
            s = tuple((digs[i][t] + digs[j][t]) % ell for t in range(field.dim))
            for p in range(n):
                for r in range(n):
                    if all((digs[p][t] + digs[r][t]) % ell == s[t] for t in range(field.dim)):
                        total += 1
    return total


def is_coset(a: PointSet) -> bool:
    """True iff A is a coset of a subgroup of V."""
    if not a.codes:
        return False
    field = a.field
    x0 = a.codes[0]
    shifted = {field.sub(c, x0) for c in a.codes}
    return shifted == set(span_points(field, shifted))


def covering_number(a: PointSet, cap: int = 10 ** 4) -> int:
    """Least h with h * A^± = ⟨A⟩ (h-fold sumset of the symmetrized set)."""
    if not a.codes:
        raise EmptyReference("covering number of empty set")
    target = set(subgroup_generated(a).codes)
    apm = symmetrized(a)
    cur = apm
    h = 1
    while set(cur.codes) != target:
        h += 1
        if h > cap:
            raise PreconditionUnmet("covering-terminates", "cap hit")
        cur = sumset(cur, apm)
    return h


def covering_bound(a: PointSet) -> int:
    """Upper bound max{2, floor(3 / (2 mu(A)))} for the covering number."""
    mu = density(a)
    return max(2, int(Fraction(3, 2) / mu))


def check_covering(a: PointSet):
    """Returns (h, bound, ok) for the covering-number bound."""
    h = covering_number(a)
    bound = covering_bound(a)
    return h, bound, h <= bound


def check_freiman_ruzsa(a: PointSet, K: Fraction | None = None):
    """Small doubling |A+A| <= K|A| forces |⟨A⟩| <= ell^{2K} |A|; exact check.

    With K rational p/q the conclusion is compared as
    |⟨A⟩|^q <= ell^{2p} * |A|^q  (integer arithmetic, no rounding).
    Returns (K, ok).
    """
    if not a.codes:
        raise EmptyReference("growth check on empty set")
    dbl = len(sumset(a, a))
    if K is None:
        K = Fraction(dbl, len(a))
    else:
        K = Fraction(K)
        if dbl > K * len(a):
            raise PreconditionUnmet("doubling<=K", f"|A+A|={dbl} > K|A|")
    span_size = len(subgroup_generated(a))
    p, q = K.numerator, K.denominator
    ok = span_size ** q <= a.field.ell ** (2 * p) * len(a) ** q
    return K, ok


def check_plunnecke(a: PointSet, b: PointSet, k: int, K: Fraction | None = None):
    """|A+B| <= K|A| forces |kB| <= K^k |A|; exact check. Returns (K, ok)."""
    _require_same_field(a, b)
    if not a.codes or not b.codes:
        raise EmptyReference("growth check on empty set")
    ab = len(sumset(a, b))
    if K is None:
        K = Fraction(ab, len(a))
    else:
        K = Fraction(K)
        if ab > K * len(a):
            raise PreconditionUnmet("sumset<=K|A|", f"|A+B|={ab} > K|A|")
    kb = len(iterated_sumset(k, b))
    ok = Fraction(kb) <= K ** k * len(a)
    return K, ok
