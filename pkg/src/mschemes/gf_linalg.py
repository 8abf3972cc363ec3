"""Linear algebra over prime fields F_ell and coding of points/tuples.

Points of V = F_ell^d are coded as integers in [0, ell^d): base-ell digits,
coordinate 0 most significant.  k-tuples of points are coded in base q = ell^d
with tuple coordinate 1 most significant; the integer tuple code is the single
ordering currency used everywhere (block numbering, reports, JSON).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .caps import DEFAULT_CAP_MAPS, MAX_DIM, MAX_ELL, cap_tuples
from .errors import ArityMismatch, CapExceeded, IndexOutOfRange, InputError


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in range(2, int(n ** 0.5) + 1):
        if n % p == 0:
            return False
    return True


@dataclass(frozen=True)
class Field:
    """Ambient vector space F_ell^dim with point-coding helpers."""

    ell: int
    dim: int

    def __post_init__(self):
        if not is_prime(self.ell):
            raise InputError(f"ell={self.ell} is not prime")
        if self.ell > MAX_ELL:
            raise CapExceeded("ell", self.ell, MAX_ELL)
        if not (1 <= self.dim <= MAX_DIM):
            raise InputError(f"dim={self.dim} outside [1, {MAX_DIM}]")

    @property
    def q(self) -> int:
        return self.ell ** self.dim

    # ---- point coding -------------------------------------------------

    def encode(self, vec: Sequence[int]) -> int:
        if len(vec) != self.dim:
            raise ArityMismatch(f"vector length {len(vec)} != dim {self.dim}")
        code = 0
        for c in vec:
            c = int(c)
            if not (0 <= c < self.ell):
                raise IndexOutOfRange(f"coordinate {c} outside [0, {self.ell})")
            code = code * self.ell + c
        return code

    def decode(self, code: int):
        if not (0 <= code < self.q):
            raise IndexOutOfRange(f"point code {code} outside [0, {self.q})")
        out = []
        for _ in range(self.dim):
            out.append(code % self.ell)
            code //= self.ell
        return tuple(reversed(out))

    def _digit_table(self) -> np.ndarray:
        return _digit_table(self.ell, self.dim)

    def decode_batch(self, codes) -> np.ndarray:
        """Array of shape (n, dim) with the digit rows of the given codes."""
        return self._digit_table()[np.asarray(codes, dtype=np.int64)]

    def encode_batch(self, rows: np.ndarray) -> np.ndarray:
        weights = self.ell ** np.arange(self.dim - 1, -1, -1, dtype=np.int64)
        return (np.asarray(rows, dtype=np.int64) % self.ell) @ weights

    # ---- point arithmetic (on codes) ---------------------------------

    def add(self, a: int, b: int) -> int:
        return int(self.encode_batch(self.decode_batch([a]) + self.decode_batch([b]))[0])

    def sub(self, a: int, b: int) -> int:
        return int(self.encode_batch(self.decode_batch([a]) - self.decode_batch([b]))[0])

    def neg(self, a: int) -> int:
        return int(self.encode_batch(-self.decode_batch([a]))[0])

    def smul(self, c: int, a: int) -> int:
        return int(self.encode_batch(c * self.decode_batch([a]))[0])

    @property
    def zero(self) -> int:
        return 0

    # ---- tuple coding -------------------------------------------------

    def encode_tuple(self, point_codes: Sequence[int]) -> int:
        code = 0
        for c in point_codes:
            if not (0 <= c < self.q):
                raise IndexOutOfRange(f"point code {c} outside [0, {self.q})")
            code = code * self.q + int(c)
        return code

    def decode_tuple(self, code: int, k: int):
        out = []
        for _ in range(k):
            out.append(code % self.q)
            code //= self.q
        if code:
            raise IndexOutOfRange("tuple code too large for arity")
        return tuple(reversed(out))


@lru_cache(maxsize=64)
def _digit_table(ell: int, dim: int) -> np.ndarray:
    q = ell ** dim
    if q > cap_tuples():
        raise CapExceeded("point space", q, cap_tuples())
    codes = np.arange(q, dtype=np.int64)
    cols = []
    for i in range(dim):
        cols.append((codes // ell ** (dim - 1 - i)) % ell)
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# coordinate-linear maps between tuple spaces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinMap:
    """Coordinate-linear map V^k -> V^k' given by a k x k' coefficient matrix.

    Output coordinate j of input (x_1..x_k) is sum_i coeffs[i][j] * x_i.
    """

    src_arity: int
    dst_arity: int
    coeffs: tuple  # tuple of src_arity rows, each a tuple of dst_arity ints

    def __post_init__(self):
        if len(self.coeffs) != self.src_arity or any(
            len(row) != self.dst_arity for row in self.coeffs
        ):
            raise ArityMismatch("coefficient matrix shape mismatch")

    def apply(self, field: Field, pts: Sequence[int]):
        """Apply to one tuple of point codes; returns a tuple of point codes."""
        if len(pts) != self.src_arity:
            raise ArityMismatch(
                f"tuple arity {len(pts)} != map source arity {self.src_arity}"
            )
        rows = field.decode_batch(list(pts))  # (k, d)
        mat = np.asarray(self.coeffs, dtype=np.int64)  # (k, k')
        out = (mat.T @ rows) % field.ell  # (k', d)
        return tuple(int(c) for c in field.encode_batch(out))

    def apply_batch(self, field: Field, tuples: np.ndarray) -> np.ndarray:
        """Apply to an (n, k) array of point codes; returns (n, k') codes."""
        n, k = tuples.shape
        if k != self.src_arity:
            raise ArityMismatch("batch arity mismatch")
        digs = field.decode_batch(tuples.reshape(-1)).reshape(n, k, field.dim)
        mat = np.asarray(self.coeffs, dtype=np.int64)
        out = np.einsum("ij,nid->njd", mat, digs) % field.ell  # (n, k', d)
        return field.encode_batch(out.reshape(-1, field.dim)).reshape(n, self.dst_arity)

    def as_lists(self):
        return [list(row) for row in self.coeffs]


def linmap(coeffs) -> LinMap:
    rows = tuple(tuple(int(c) for c in row) for row in coeffs)
    return LinMap(len(rows), len(rows[0]) if rows else 0, rows)


def identity_map(k: int) -> LinMap:
    return linmap([[1 if i == j else 0 for j in range(k)] for i in range(k)])


def projection(k: int, i: int) -> LinMap:
    """pi_{k,i}: (x_1..x_k) -> x_i (1-based i)."""
    if not (1 <= i <= k):
        raise IndexOutOfRange(f"projection index {i} outside [1, {k}]")
    return linmap([[1 if r == i - 1 else 0] for r in range(k)])


def summation(k: int) -> LinMap:
    """sigma_k: (x_1..x_k) -> x_1 + ... + x_k."""
    return linmap([[1]] * k)


def swap_map(k: int, i: int, j: int) -> LinMap:
    """Transposition of coordinates i and j (1-based) of V^k."""
    perm = list(range(k))
    perm[i - 1], perm[j - 1] = perm[j - 1], perm[i - 1]
    return linmap([[1 if perm[c] == r else 0 for c in range(k)] for r in range(k)])


def compose(second: LinMap, first: LinMap) -> LinMap:
    """second o first, applying `first` first."""
    if first.dst_arity != second.src_arity:
        raise ArityMismatch("composition arity mismatch")
    a = np.asarray(first.coeffs, dtype=np.int64)
    b = np.asarray(second.coeffs, dtype=np.int64)
    return linmap((a @ b).tolist())  # entries reduced mod ell at application time


def enumerate_linmaps(field: Field, k: int, kp: int, cap: int = DEFAULT_CAP_MAPS):
    """All coordinate-linear maps V^k -> V^k', in lexicographic coefficient order."""
    total = field.ell ** (k * kp)
    if total > cap:
        raise CapExceeded(f"linear maps {k}->{kp}", total, cap)
    for flat in itertools.product(range(field.ell), repeat=k * kp):
        yield linmap([flat[i * kp:(i + 1) * kp] for i in range(k)])


# ---------------------------------------------------------------------------
# matrix algebra mod ell
# ---------------------------------------------------------------------------


def rref_mod(matrix, ell: int):
    """Reduced row echelon form mod prime ell; returns (rref, pivot columns)."""
    mat = np.array(matrix, dtype=np.int64) % ell
    if mat.ndim != 2:
        mat = mat.reshape(len(mat), -1)
    nrows, ncols = mat.shape
    pivots = []
    row = 0
    for col in range(ncols):
        pivot = None
        for r in range(row, nrows):
            if mat[r, col] % ell:
                pivot = r
                break
        if pivot is None:
            continue
        if pivot != row:
            mat[[row, pivot]] = mat[[pivot, row]]
        inv = pow(int(mat[row, col]), -1, ell)
        mat[row] = (mat[row] * inv) % ell
        for r in range(nrows):
            if r != row and mat[r, col]:
                mat[r] = (mat[r] - mat[r, col] * mat[row]) % ell
        pivots.append(col)
        row += 1
        if row == nrows:
            break
    return mat, tuple(pivots)


def rank_mod(matrix, ell: int) -> int:
    return len(rref_mod(matrix, ell)[1])


def nullspace_basis_mod(matrix, ell: int) -> np.ndarray:
    """Basis rows of {x : matrix @ x = 0 (mod ell)}."""
    mat = np.array(matrix, dtype=np.int64) % ell
    if mat.size == 0:
        n = mat.shape[1] if mat.ndim == 2 else 0
        return np.eye(n, dtype=np.int64)
    red, pivots = rref_mod(mat, ell)
    ncols = red.shape[1]
    pivset = set(pivots)
    free = [c for c in range(ncols) if c not in pivset]
    basis = []
    for f in free:
        vec = np.zeros(ncols, dtype=np.int64)
        vec[f] = 1
        for r, p in enumerate(pivots):
            vec[p] = (-red[r, f]) % ell
        basis.append(vec)
    if not basis:
        return np.zeros((0, ncols), dtype=np.int64)
    return np.stack(basis)


def span_basis(field: Field, codes: Iterable[int]) -> np.ndarray:
    """Row basis (rref rows) of the F_ell-span of the given point codes."""
    codes = list(codes)
    if not codes:
        return np.zeros((0, field.dim), dtype=np.int64)
    rows = field.decode_batch(codes)
    red, pivots = rref_mod(rows, field.ell)
    return red[: len(pivots)]


def span_dim(field: Field, codes: Iterable[int]) -> int:
    return span_basis(field, codes).shape[0]


def span_points(field: Field, codes: Iterable[int], cap: int | None = None):
    """All point codes of the subgroup generated by the given points, sorted."""
    basis = span_basis(field, codes)
    r = basis.shape[0]
    size = field.ell ** r
    if cap is None:
        cap = cap_tuples()
    if size > cap:
        raise CapExceeded("span", size, cap)
    if r == 0:
        return [0]
    combos = np.array(
        list(itertools.product(range(field.ell), repeat=r)), dtype=np.int64
    )
    pts = (combos @ basis) % field.ell
    return sorted(int(c) for c in set(field.encode_batch(pts).tolist()))


def in_span(field: Field, basis: np.ndarray, code: int) -> bool:
    if basis.shape[0] == 0:
        return code == 0
    vec = field.decode_batch([code])[0]
    aug = np.vstack([basis, vec])
    return rank_mod(aug, field.ell) == basis.shape[0]


def coords_in_basis(field: Field, basis: np.ndarray, code: int):
    """Coordinates of a point in the given rref row basis, or None."""
    r = basis.shape[0]
    vec = field.decode_batch([code])[0]
    if r == 0:
        return () if code == 0 else None
    # solve c @ basis = vec via rref of [basis^T | vec]
    aug = np.concatenate([basis.T, vec.reshape(-1, 1)], axis=1)
    red, pivots = rref_mod(aug, field.ell)
    if r in pivots:  # pivot in augmented column -> inconsistent
        return None
    sol = [0] * r
    for row, p in enumerate(pivots):
        sol[p] = int(red[row, -1])
    # verify (non-pivot free vars set to 0 must still reproduce vec exactly)
    if not np.array_equal((np.array(sol) @ basis) % field.ell, vec % field.ell):
        return None
    return tuple(sol)
