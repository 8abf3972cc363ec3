"""Strong antisymmetry: block-to-block bijections, their groupoid closure,
and the depth bounds that follow from it.

A generator is a coordinate-linear map whose restriction to some block is a
bijection onto a block.  The closure of the generators (and their inverses)
under composition is searched breadth-first; a nontrivial self-bijection of
any block is a witness, exhaustion without one certifies strong
antisymmetry, and hitting the budget is reported as inconclusive.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .caps import DEFAULT_BUDGET_SATURATION, DEFAULT_CAP_MAPS
from .errors import DepthExhausted, InputError, LemmaViolation, PreconditionUnmet
from .gf_linalg import LinMap, enumerate_linmaps, linmap
from .scheme_core import Scheme


@dataclass(frozen=True)
class GenStep:
    """One letter of a witness word: a map restriction, forward or inverted."""

    tau: tuple  # coefficient matrix, row-major tuple of tuples
    direction: str  # "fwd" | "inv"
    src: tuple  # (arity, block id)
    dst: tuple

    def to_obj(self):
        return {
            "tau": [list(r) for r in self.tau],
            "direction": self.direction,
            "src": {"k": self.src[0], "block": self.src[1]},
            "dst": {"k": self.dst[0], "block": self.dst[1]},
        }

    @staticmethod
    def from_obj(obj) -> "GenStep":
        return GenStep(
            tuple(tuple(int(c) for c in row) for row in obj["tau"]),
            obj["direction"],
            (int(obj["src"]["k"]), int(obj["src"]["block"])),
            (int(obj["dst"]["k"]), int(obj["dst"]["block"])),
        )


@dataclass
class Witness:
    block: tuple  # (arity, block id) the word permutes nontrivially
    word: list  # list of GenStep
    mapping: tuple  # image tuple index per ascending member of the block

    def to_json(self) -> str:
        return json.dumps(
            {
                "block": {"k": self.block[0], "block": self.block[1]},
                "word": [s.to_obj() for s in self.word],
            },
            sort_keys=True,
            separators=(",", ":"),
        )


@dataclass
class SaturationResult:
    status: str  # "antisymmetric" | "witness" | "inconclusive"
    maps_explored: int
    budget: int
    witness: Optional[Witness] = None
    generators: int = 0


def _block_members(sch: Scheme, k: int, b: int) -> np.ndarray:
    return np.sort(sch.level(k).blocks()[b])


def generator_maps(sch: Scheme, map_cap: int = DEFAULT_CAP_MAPS):
    """All bijective block-to-block restrictions of coordinate-linear maps.

    Returns (gens, member_arrays) where gens is a list of
    (src, dst, mapping, GenStep) with mapping aligned to the ascending member
    list of the source block.
    """
    inst = sch.instance
    pos = inst.pos_of()
    gens = []
    seen = set()
    members = {}

    def member_pos(ref):
        if ref not in members:
            arr = _block_members(sch, *ref)
            members[ref] = (arr, {int(t): i for i, t in enumerate(arr)})
        return members[ref]

    for k in range(1, sch.m + 1):
        tuples = inst.tuples_array(k)
        part_k = sch.level(k)
        blocks = part_k.blocks()
        for kp in range(1, sch.m + 1):
            part_kp = sch.level(kp)
            radix = inst.n ** np.arange(kp - 1, -1, -1, dtype=np.int64)
            for tau in enumerate_linmaps(inst.field, k, kp):
                img = tau.apply_batch(inst.field, tuples)
                p = pos[img]
                in_s = (p >= 0).all(axis=1)
                img_idx = np.maximum(p, 0) @ radix
                for b, rows in enumerate(blocks):
                    rows = np.sort(rows)
                    if not in_s[rows].all():
                        continue
                    tgt = img_idx[rows]
                    uniq = np.unique(tgt)
                    if len(uniq) != len(rows):
                        continue  # not injective on the block
                    bp = int(part_kp.bid[tgt[0]])
                    tgt_members, _ = member_pos((kp, bp))
                    if len(tgt_members) != len(uniq) or not np.array_equal(uniq, tgt_members):
                        continue  # not onto a block
                    src = (k, b)
                    dst = (kp, bp)
                    mapping = tuple(int(t) for t in tgt)
                    key = (src, dst, mapping)
                    if key in seen:
                        continue
                    seen.add(key)
                    gens.append((src, dst, mapping, GenStep(tau.coeffs, "fwd", src, dst)))
    return gens, member_pos


def strong_antisym_check(sch: Scheme, budget: int = DEFAULT_BUDGET_SATURATION) -> SaturationResult:
    """Saturate the partial-bijection groupoid; cache the verdict on the scheme."""
    gens, member_pos = generator_maps(sch)
    # add inverses as generators too
    all_gens = list(gens)
    for src, dst, mapping, step in gens:
        src_members, _ = member_pos(src)
        dst_members, dst_pos = member_pos(dst)
        inv_mapping = [0] * len(mapping)
        for i, t in enumerate(mapping):
            inv_mapping[dst_pos[t]] = int(src_members[i])
        all_gens.append(
            (dst, src, tuple(inv_mapping), GenStep(step.tau, "inv", dst, src))
        )

    def is_identity(src, mapping):
        arr, _ = member_pos(src)
        return np.array_equal(arr, np.array(mapping, dtype=np.int64))

    explored = {}
    words = []
    queue = []

    def admit(src, dst, mapping, word_entry):
        key = (src, dst, mapping)
        if key in explored:
            return None
        explored[key] = len(words)
        words.append(word_entry)
        queue.append(key)
        return key

    witness = None
    for src, dst, mapping, step in all_gens:
        admit(src, dst, mapping, (None, step))
        if src == dst and not is_identity(src, mapping):
            witness = (src, mapping, explored[(src, dst, mapping)])
            break

    # index generators by source block for composition
    by_src = {}
    for src, dst, mapping, step in all_gens:
        by_src.setdefault(src, []).append((dst, mapping, step))

    head = 0
    while witness is None and head < len(queue):
        if len(explored) > budget:
            return SaturationResult("inconclusive", len(explored), budget,
                                    generators=len(gens))
        src, dst, mapping = queue[head]
        head += 1
        parent_idx = explored[(src, dst, mapping)]
        _, dst_pos = member_pos(dst)
        for gdst, gmapping, gstep in by_src.get(dst, []):
            composed = tuple(gmapping[dst_pos[t]] for t in mapping)
            key = admit(src, gdst, composed, (parent_idx, gstep))
            if key is None:
                continue
            if src == gdst and not is_identity(src, composed):
                witness = (src, composed, explored[key])
                break

    if witness is None:
        result = SaturationResult("antisymmetric", len(explored), budget,
                                  generators=len(gens))
    else:
        src, mapping, idx = witness
        word = []
        while idx is not None:
            parent, step = words[idx]
            word.append(step)
            idx = parent
        word.reverse()
        result = SaturationResult(
            "witness", len(explored), budget,
            witness=Witness(src, word, mapping), generators=len(gens),
        )
    sch.antisym_verdict = result
    return result


def _forward_restriction(sch: Scheme, tau: LinMap, src: tuple, dst: tuple):
    """dict: tuple index in block src -> tuple index in block dst, or None."""
    inst = sch.instance
    k, b = src
    kp, _ = dst
    src_members = _block_members(sch, k, b)
    img = tau.apply_batch(inst.field, inst.tuples_array(k)[src_members])
    p = inst.pos_of()[img]
    if (p < 0).any():
        return None
    radix = inst.n ** np.arange(kp - 1, -1, -1, dtype=np.int64)
    tgt = np.maximum(p, 0) @ radix
    fwd = {int(s): int(t) for s, t in zip(src_members, tgt)}
    if len(set(fwd.values())) != len(fwd):
        return None
    dst_members = set(int(t) for t in _block_members(sch, *dst))
    if set(fwd.values()) != dst_members:
        return None
    return fwd


def replay_witness(sch: Scheme, witness: Witness) -> bool:
    """Recompute the witness word step by step; True iff it really is a
    nontrivial self-bijection of the claimed block."""
    if not witness.word or witness.word[0].src != witness.block:
        return False
    cur_ref = witness.block
    members = _block_members(sch, *witness.block)
    mapping = {int(t): int(t) for t in members}
    for step in witness.word:
        if step.src != cur_ref:
            return False
        tau = linmap(step.tau)
        if step.direction == "fwd":
            stepmap = _forward_restriction(sch, tau, step.src, step.dst)
        else:
            # the recorded map runs dst -> src; invert it
            fwd = _forward_restriction(sch, tau, step.dst, step.src)
            stepmap = {v: s for s, v in fwd.items()} if fwd else None
        if stepmap is None:
            return False
        mapping = {s: stepmap[t] for s, t in mapping.items()}
        cur_ref = step.dst
    if cur_ref != witness.block:
        return False
    replayed = tuple(mapping[int(t)] for t in members)
    if replayed != witness.mapping:
        return False
    return not np.array_equal(np.array(replayed), members)


# ---------------------------------------------------------------------------
# depth bounds
# ---------------------------------------------------------------------------


@dataclass
class DepthBoundsReport:
    m: int
    span_dim: int
    largest_block: int
    dim_margin: int      # span_dim - m (must be >= 1 when level 1 not discrete)
    log_margin: float    # log2(largest block) - m (>= 0)
    ok: bool


def depth_bounds_check(sch: Scheme) -> DepthBoundsReport:
    """m < dim⟨S⟩ and 2^m <= |B| for the largest block, given strong antisymmetry."""
    if sch.antisym_verdict is None or sch.antisym_verdict.status != "antisymmetric":
        raise PreconditionUnmet("strong-antisymmetry", "run strong_antisym_check first")
    lvl1 = sch.level(1)
    sizes = [lvl1.block_size(b) for b in range(lvl1.num_blocks)]
    largest = max(sizes)
    if largest < 2:
        raise PreconditionUnmet("level-1-not-discrete")
    sd = sch.instance.span_dim()
    ok = sch.m < sd and 2 ** sch.m <= largest
    return DepthBoundsReport(
        sch.m, sd, largest, sd - sch.m, math.log2(largest) - sch.m, ok
    )


def halving_step(sch: Scheme, b: int, x: int, y: int):
    """Fix x in block b; the sub-block containing y must satisfy
    1 < |B'| <= |B|/2.  Returns (fibred scheme, block id of y, |B'|)."""
    if sch.m < 2:
        raise DepthExhausted("halving needs depth >= 2")
    block = set(sch.level1_block_set(b))
    if x not in block or y not in block or x == y:
        raise InputError("x, y must be distinct members of the block")
    fib = sch.fiber((x,))
    bp = fib.level(1).block_of_tuple((y,))
    size = fib.level(1).block_size(bp)
    if not (1 < size and 2 * size <= len(block)):
        raise LemmaViolation(
            f"halving failed: |B|={len(block)}, |B'|={size} for x={x}, y={y}"
        )
    return fib, bp, size


@dataclass
class DepthTraceStep:
    x: int
    block_sizes: tuple
    tracked: int


@dataclass
class DepthTrace:
    start_size: int
    steps: list
    completed: bool

    @property
    def count(self) -> int:
        return len(self.steps)


def depth_measure(sch: Scheme, b: int) -> DepthTrace:
    """Repeatedly fix greedily-chosen points until the tracked block is a
    singleton; the number of fixings is bounded by log2 of the block size.

    Raises DepthExhausted (with the partial trace attached) when the scheme
    runs out of depth first.
    """
    cur = sch
    block = sorted(sch.level1_block_set(b))
    start = len(block)
    steps = []
    while len(block) > 1:
        if cur.m < 2:
            trace = DepthTrace(start, steps, False)
            _depth_asserts(sch, start, len(steps))
            raise DepthExhausted(
                f"depth exhausted with tracked block of size {len(block)}", trace
            )
        best = None
        for x in block:
            fib = cur.fiber((x,))
            lvl = fib.level(1)
            sizes = sorted(
                (lvl.block_size(lvl.block_of_tuple((y,))) for y in block if y != x),
                reverse=True,
            )
            cand = (sizes[0], x, fib, lvl)
            if best is None or cand[0] < best[0]:
                best = cand
        largest, x, fib, lvl = best
        new_ids = {lvl.block_of_tuple((y,)) for y in block if y != x}
        tracked_id = max(new_ids, key=lambda i: (lvl.block_size(i), -i))
        tracked = sorted(
            y for y in block if y != x and lvl.block_of_tuple((y,)) == tracked_id
        )
        steps.append(
            DepthTraceStep(x, tuple(sorted((lvl.block_size(i) for i in new_ids), reverse=True)), len(tracked))
        )
        cur = fib
        block = tracked
    _depth_asserts(sch, start, len(steps))
    return DepthTrace(start, steps, True)


def _depth_asserts(sch: Scheme, start: int, count: int):
    if 2 ** count > start:
        raise LemmaViolation(f"{count} fixings exceed log2({start})")
    if count >= sch.instance.span_dim():
        raise LemmaViolation(f"{count} fixings reach dim span(S)")
