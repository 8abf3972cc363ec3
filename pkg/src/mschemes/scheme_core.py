"""Partition systems on tuple powers of a point set, and their axioms.

A depth-m scheme on S ⊆ F_ell^d is a family of partitions, one of S^k for
each k in [m], required to interact with every coordinate-linear map
tau: V^k -> V^k' as follows:

  (P1) for blocks B, B': tau(B) = B' or tau(B) ∩ B' = ∅  (as subsets of V^k');
  (P2) when tau(B) = B', the fibre sizes #{x in B : tau(x) = y} agree for
       all y in B'.

Tuples of S^k are indexed by their mixed-radix position over sorted S (first
coordinate most significant), which coincides with ordering by integer tuple
code.  Blocks are numbered by smallest contained tuple, ascending.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from typing import Iterable, Optional, Sequence

import numpy as np

from .caps import cap_tuples
from .errors import (
    ArityMismatch,
    CapExceeded,
    DepthExhausted,
    EmptyReference,
    IndexOutOfRange,
    InputError,
    NotBlockUnion,
)
from .gf_linalg import Field, LinMap, enumerate_linmaps, span_dim


@dataclass(frozen=True)
class SchemeInstance:
    """The carrier data: field and the sorted point set S."""

    field: Field
    s_codes: tuple

    def __post_init__(self):
        if not self.s_codes:
            raise EmptyReference("empty carrier set S")
        if list(self.s_codes) != sorted(set(self.s_codes)):
            raise InputError("S must be sorted and duplicate-free")
        if not (0 <= self.s_codes[0] and self.s_codes[-1] < self.field.q):
            raise IndexOutOfRange("S contains codes outside the field")

    @property
    def n(self) -> int:
        return len(self.s_codes)

    def pos_of(self) -> np.ndarray:
        """Array over the point-code space: position in S, or -1."""
        pos = np.full(self.field.q, -1, dtype=np.int64)
        pos[np.array(self.s_codes, dtype=np.int64)] = np.arange(self.n)
        return pos

    def tuple_count(self, k: int) -> int:
        return self.n ** k

    def check_tuple_cap(self, k: int):
        if self.n ** k > cap_tuples():
            raise CapExceeded(f"tuple space S^{k}", self.n ** k, cap_tuples())

    def tuples_array(self, k: int) -> np.ndarray:
        """(n^k, k) array of point codes, row t = tuple with index t."""
        self.check_tuple_cap(k)
        n = self.n
        idx = np.arange(n ** k, dtype=np.int64)
        s_arr = np.array(self.s_codes, dtype=np.int64)
        cols = [s_arr[(idx // n ** (k - 1 - i)) % n] for i in range(k)]
        return np.stack(cols, axis=1)

    def tuple_index(self, pts: Sequence[int]) -> int:
        pos = self.pos_of()
        idx = 0
        for c in pts:
            p = int(pos[c]) if 0 <= c < self.field.q else -1
            if p < 0:
                raise IndexOutOfRange(f"point code {c} not in S")
            idx = idx * self.n + p
        return idx

    def tuple_points(self, idx: int, k: int):
        out = []
        for _ in range(k):
            out.append(self.s_codes[idx % self.n])
            idx //= self.n
        return tuple(reversed(out))

    def span_dim(self) -> int:
        return span_dim(self.field, self.s_codes)


def canonical_block_ids(raw: np.ndarray) -> np.ndarray:
    """Renumber block labels so ids increase with first occurrence."""
    _, first, inverse = np.unique(raw, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    return rank[inverse]


@dataclass
class TuplePartition:
    """A partition of S^k, stored as a block-id array over tuple indices."""

    instance: SchemeInstance
    arity: int
    bid: np.ndarray  # shape (n^k,), canonical block ids

    _blocks: Optional[list] = dc_field(default=None, repr=False)

    @staticmethod
    def from_raw(instance: SchemeInstance, arity: int, raw: np.ndarray) -> "TuplePartition":
        if len(raw) != instance.tuple_count(arity):
            raise ArityMismatch("block-id array length mismatch")
        return TuplePartition(instance, arity, canonical_block_ids(np.asarray(raw)))

    @property
    def num_blocks(self) -> int:
        return int(self.bid.max()) + 1 if len(self.bid) else 0

    def blocks(self) -> list:
        """List of np arrays of tuple indices, one per block id."""
        if self._blocks is None:
            order = np.argsort(self.bid, kind="stable")
            sorted_bids = self.bid[order]
            cuts = np.searchsorted(sorted_bids, np.arange(self.num_blocks + 1))
            self._blocks = [order[cuts[b]:cuts[b + 1]] for b in range(self.num_blocks)]
        return self._blocks

    def block_size(self, b: int) -> int:
        return len(self.blocks()[b])

    def block_tuples(self, b: int):
        """Tuples of a block, as tuples of point codes, ascending."""
        return [self.instance.tuple_points(int(i), self.arity) for i in sorted(self.blocks()[b])]

    def block_of_tuple(self, pts: Sequence[int]) -> int:
        return int(self.bid[self.instance.tuple_index(pts)])

    def is_discrete(self) -> bool:
        return self.num_blocks == len(self.bid)

    def refines(self, other: "TuplePartition") -> bool:
        """True if every block of self lies inside a block of other."""
        if self.arity != other.arity or len(self.bid) != len(other.bid):
            raise ArityMismatch("refinement comparison between different spaces")
        for rows in self.blocks():
            if len(np.unique(other.bid[rows])) != 1:
                return False
        return True

    def ids_as_union(self, tuple_indices: Iterable[int]):
        """Express a set of tuple indices as a set of block ids, or raise."""
        want = np.zeros(len(self.bid), dtype=bool)
        idx = np.fromiter((int(i) for i in tuple_indices), dtype=np.int64)
        want[idx] = True
        ids = set(int(b) for b in np.unique(self.bid[idx])) if len(idx) else set()
        got = np.zeros(len(self.bid), dtype=bool)
        for b in ids:
            got[self.blocks()[b]] = True
        if not np.array_equal(want, got):
            raise NotBlockUnion(
                f"set of {int(want.sum())} tuples is not a union of arity-{self.arity} blocks"
            )
        return frozenset(ids)


# ---------------------------------------------------------------------------
# the scheme object
# ---------------------------------------------------------------------------


@dataclass
class Violation:
    k: int
    kp: int
    tau: LinMap
    src_block: int
    detail: str

    def describe(self) -> str:
        return (
            f"P-axiom violation at ({self.k}->{self.kp}), tau={self.tau.as_lists()}, "
            f"block {self.src_block}: {self.detail}"
        )


@dataclass
class ValidationReport:
    ok: bool
    checked_maps: int
    violations: list
    partial: bool = False  # True when caps stopped the sweep early

    def first(self) -> Optional[Violation]:
        return self.violations[0] if self.violations else None


class Scheme:
    """Depth-m partition system on S^1..S^m.

    Levels may be materialized eagerly (explicit schemes) or on demand from a
    backend exposing `orbit_partition_raw(instance, k)` and
    `stabilizer_backend(point_codes)` (group-action schemes whose declared
    depth exceeds what can be materialized).
    """

    def __init__(self, instance: SchemeInstance, m: int, levels=None, backend=None,
                 prefix=()):
        if m < 1:
            raise InputError("depth m must be >= 1")
        self.instance = instance
        self.m = m
        self.backend = backend
        self.prefix = tuple(prefix)
        self._levels: dict = {}
        if levels:
            for part in levels:
                self._levels[part.arity] = part
        if backend is None:
            missing = [k for k in range(1, m + 1) if k not in self._levels]
            if missing:
                raise InputError(f"explicit scheme missing levels {missing}")
        self.antisym_verdict = None  # cached by the saturation checker
        self._fiber_cache: dict = {}

    # ---- basic accessors ---------------------------------------------

    @property
    def field(self) -> Field:
        return self.instance.field

    @property
    def s_codes(self) -> tuple:
        return self.instance.s_codes

    def level(self, k: int) -> TuplePartition:
        if not (1 <= k <= self.m):
            raise DepthExhausted(f"level {k} outside depth m={self.m}")
        if k not in self._levels:
            raw = self.backend.orbit_partition_raw(self.instance, k)
            self._levels[k] = TuplePartition.from_raw(self.instance, k, raw)
        return self._levels[k]

    def materialized_levels(self):
        return sorted(self._levels)

    def is_discrete(self) -> bool:
        return self.level(1).is_discrete()

    def block_points(self, k: int, b: int):
        return self.level(k).block_tuples(b)

    def level1_block_set(self, b: int):
        """Point codes of a level-1 block."""
        return [pts[0] for pts in self.level(1).block_tuples(b)]

    # ---- fibre restriction -------------------------------------------

    def fiber(self, pts: Sequence[int]) -> "Scheme":
        """Restriction to the prefix pts in S^t: a depth (m-t) scheme on S."""
        pts = tuple(int(c) for c in pts)
        t = len(pts)
        if t == 0:
            return self
        if pts in self._fiber_cache:
            return self._fiber_cache[pts]
        if t >= self.m:
            raise DepthExhausted(f"cannot fix {t} points of a depth-{self.m} scheme")
        for c in pts:
            if c not in set(self.s_codes):
                raise IndexOutOfRange(f"fibre point {c} not in S")
        if self.backend is not None:
            sub = self.backend.stabilizer_backend(pts)
            out = Scheme(self.instance, self.m - t, backend=sub,
                         prefix=self.prefix + pts)
            self._fiber_cache[pts] = out
            return out
        inst = self.instance
        n = inst.n
        prefix_idx = inst.tuple_index(pts)
        levels = []
        for k in range(1, self.m - t + 1):
            parent = self.level(t + k)
            offset = prefix_idx * n ** k
            raw = parent.bid[offset:offset + n ** k]
            levels.append(TuplePartition.from_raw(inst, k, raw))
        out = Scheme(inst, self.m - t, levels=levels, prefix=self.prefix + pts)
        self._fiber_cache[pts] = out
        return out

    # ---- axiom validation --------------------------------------------

    def validate(self, max_violations: int = 16, level_pairs=None) -> ValidationReport:
        """Exhaustive P1/P2 sweep over all arities and coordinate-linear maps."""
        inst = self.instance
        pos = inst.pos_of()
        violations = []
        checked = 0
        pairs = level_pairs or [(k, kp) for k in range(1, self.m + 1)
                                for kp in range(1, self.m + 1)]
        for k, kp in pairs:
            part_k = self.level(k)
            part_kp = self.level(kp)
            tuples = inst.tuples_array(k)
            blocks = part_k.blocks()
            n = inst.n
            radix = n ** np.arange(kp - 1, -1, -1, dtype=np.int64)
            for tau in enumerate_linmaps(inst.field, k, kp):
                checked += 1
                img = tau.apply_batch(inst.field, tuples)  # (n^k, kp) codes
                p = pos[img]
                in_s = (p >= 0).all(axis=1)
                img_idx = np.where(in_s, (np.maximum(p, 0) @ radix), -1)
                for b, rows in enumerate(blocks):
                    sub_in = in_s[rows]
                    if not sub_in.any():
                        continue
                    if not sub_in.all():
                        violations.append(Violation(
                            k, kp, tau, b,
                            "image meets S^{kp} but also leaves it "
                            f"({int(sub_in.sum())}/{len(rows)} inside)",
                        ))
                    else:
                        tgt = img_idx[rows]
                        bids = np.unique(part_kp.bid[tgt])
                        if len(bids) > 1:
                            violations.append(Violation(
                                k, kp, tau, b,
                                f"image straddles blocks {bids.tolist()} at arity {kp}",
                            ))
                        else:
                            bp = int(bids[0])
                            vals, counts = np.unique(tgt, return_counts=True)
                            tgt_block = blocks_sorted(part_kp, bp)
                            if len(vals) != len(tgt_block) or not np.array_equal(
                                vals, tgt_block
                            ):
                                violations.append(Violation(
                                    k, kp, tau, b,
                                    f"image covers only part of block {bp} at arity {kp}",
                                ))
                            elif counts.min() != counts.max():
                                violations.append(Violation(
                                    k, kp, tau, b,
                                    f"fibre sizes over block {bp} not constant "
                                    f"(range {int(counts.min())}..{int(counts.max())})",
                                ))
                    if len(violations) >= max_violations:
                        return ValidationReport(False, checked, violations)
        return ValidationReport(not violations, checked, violations)

    # ---- closedness operations ---------------------------------------

    def blockset_indices(self, k: int, bids) -> np.ndarray:
        part = self.level(k)
        if not bids:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate([part.blocks()[b] for b in sorted(bids)]))

    def complement_blockset(self, k: int, bids):
        return frozenset(range(self.level(k).num_blocks)) - frozenset(bids)

    def quantifier_project(self, k: int, kp: int, bids, quant: str, t: Optional[int] = None):
        """Project a block set at arity k+kp to arity k through a quantifier.

        quant: 'exists', 'forall', or 'count_eq' (with t = required count) over
        the last kp coordinates.  Result is returned as a block-id set at
        arity k; by closedness it must be one, and this is checked.
        """
        if k + kp > self.m:
            raise DepthExhausted(f"projection needs level {k + kp} > m={self.m}")
        inst = self.instance
        n = inst.n
        idx = self.blockset_indices(k + kp, bids)
        prefixes = idx // n ** kp
        counts = np.bincount(prefixes, minlength=n ** k)
        if quant == "exists":
            keep = counts > 0
        elif quant == "forall":
            keep = counts == n ** kp
        elif quant == "count_eq":
            if t is None:
                raise InputError("count_eq projection needs t")
            keep = counts == t
        else:
            raise InputError(f"unknown quantifier {quant!r}")
        return self.level(k).ids_as_union(np.nonzero(keep)[0])

    def image_blockset(self, tau: LinMap, bids):
        """tau(union of blocks) ∩ S^{k'}, as a block-id set at arity k'."""
        k, kp = tau.src_arity, tau.dst_arity
        inst = self.instance
        idx = self.blockset_indices(k, bids)
        if len(idx) == 0:
            return frozenset()
        tuples = inst.tuples_array(k)[idx]
        img = tau.apply_batch(inst.field, tuples)
        pos = inst.pos_of()[img]
        in_s = (pos >= 0).all(axis=1)
        radix = inst.n ** np.arange(kp - 1, -1, -1, dtype=np.int64)
        tgt = np.unique((np.maximum(pos, 0) @ radix)[in_s])
        return self.level(kp).ids_as_union(tgt)

    def preimage_blockset(self, tau: LinMap, bids, k: Optional[int] = None):
        """tau^{-1}(union of blocks) ∩ S^k, as a block-id set at arity k."""
        k = k if k is not None else tau.src_arity
        if k != tau.src_arity:
            raise ArityMismatch("preimage arity mismatch")
        kp = tau.dst_arity
        inst = self.instance
        tuples = inst.tuples_array(k)
        img = tau.apply_batch(inst.field, tuples)
        pos = inst.pos_of()[img]
        in_s = (pos >= 0).all(axis=1)
        radix = inst.n ** np.arange(kp - 1, -1, -1, dtype=np.int64)
        img_idx = np.maximum(pos, 0) @ radix
        part_kp = self.level(kp)
        member = np.zeros(inst.tuple_count(kp), dtype=bool)
        for b in sorted(bids):
            member[part_kp.blocks()[b]] = True
        hit = in_s & member[img_idx]
        return self.level(k).ids_as_union(np.nonzero(hit)[0])

    # ---- relation profiles -------------------------------------------

    def linear_relation_profile(self, k: int, b: int):
        """Canonical basis of {c : sum c_i x_i = 0} shared by a block.

        Returns (basis rows as tuple-of-tuples, constant: bool).  The axioms
        force the relation space to be identical across the block; the flag
        reports whether that held.
        """
        from .gf_linalg import nullspace_basis_mod, rref_mod

        inst = self.instance
        ell = inst.field.ell
        profiles = set()
        basis = None
        for pts in self.level(k).block_tuples(b):
            mat = inst.field.decode_batch(list(pts))  # (k, d)
            null = nullspace_basis_mod(mat.T, ell)  # rows c with mat^T c = 0
            red, piv = rref_mod(null, ell) if null.size else (null, ())
            canon = tuple(tuple(int(x) for x in row) for row in red[: len(piv)])
            profiles.add(canon)
            if basis is None:
                basis = canon
        return basis, len(profiles) == 1

    # ---- JSON interchange --------------------------------------------

    def to_json(self) -> str:
        inst = self.instance
        field = inst.field
        levels = []
        for k in range(1, self.m + 1):
            if field.q ** k > cap_tuples():
                raise CapExceeded("dense block_of export", field.q ** k, cap_tuples())
            part = self.level(k)
            dense = np.full(field.q ** k, -1, dtype=np.int64)
            tuples = inst.tuples_array(k)
            weights = field.q ** np.arange(k - 1, -1, -1, dtype=np.int64)
            codes = tuples @ weights
            dense[codes] = part.bid
            levels.append({"k": k, "block_of": dense.tolist()})
        obj = {
            "ell": field.ell,
            "dim": field.dim,
            "S": [list(field.decode(c)) for c in inst.s_codes],
            "m": self.m,
            "levels": levels,
        }
        return json.dumps(obj, sort_keys=True, separators=(",", ":"))

    @staticmethod
    def from_json(text: str) -> "Scheme":
        try:
            obj = json.loads(text)
            field = Field(int(obj["ell"]), int(obj["dim"]))
            s_codes = tuple(sorted(field.encode(v) for v in obj["S"]))
            inst = SchemeInstance(field, s_codes)
            m = int(obj["m"])
            levels = []
            seen = set()
            for lev in obj["levels"]:
                k = int(lev["k"])
                seen.add(k)
                dense = np.array(lev["block_of"], dtype=np.int64)
                if len(dense) != field.q ** k:
                    raise InputError(
                        f"level {k}: block_of length {len(dense)} != {field.q ** k}"
                    )
                tuples = inst.tuples_array(k)
                weights = field.q ** np.arange(k - 1, -1, -1, dtype=np.int64)
                codes = tuples @ weights
                raw = dense[codes]
                if (raw < 0).any():
                    raise InputError(f"level {k}: tuple of S^{k} marked -1")
                mask = np.ones(field.q ** k, dtype=bool)
                mask[codes] = False
                if (dense[mask] != -1).any():
                    raise InputError(f"level {k}: tuple outside S^{k} has a block id")
                levels.append(TuplePartition.from_raw(inst, k, raw))
            if seen != set(range(1, m + 1)):
                raise InputError(f"levels {sorted(seen)} do not cover 1..{m}")
            return Scheme(inst, m, levels=levels)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"bad scheme JSON: {exc}") from exc


def blocks_sorted(part: TuplePartition, b: int) -> np.ndarray:
    return np.sort(part.blocks()[b])


def finest_scheme(instance: SchemeInstance, m: int) -> Scheme:
    """The all-singletons scheme (orbit scheme of the trivial group)."""
    levels = [
        TuplePartition.from_raw(instance, k, np.arange(instance.tuple_count(k)))
        for k in range(1, m + 1)
    ]
    return Scheme(instance, m, levels=levels)
