"""Discrete Fourier analysis on subgroups of F_ell^d.

The ambient group is the span of a point set, with the canonical basis given
by the reduced-row-echelon rows of its generators; characters are labelled by
dual vectors over that basis.  Coefficients use complex doubles; every
threshold comparison applies a 1e-9 guard band.
"""
from __future__ import annotations

import cmath
import csv
import io
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import CapExceeded, EmptyReference, FieldMismatch
from .gf_linalg import Field, rref_mod, span_basis

GUARD = 1e-9
CAP_GROUP_ORDER = 2 ** 16


@dataclass
class FourierContext:
    """Fourier transform context for the subgroup spanned by a generating set."""

    field: Field
    basis: np.ndarray          # rref rows, shape (r, dim)
    pivots: tuple
    elements: list             # sorted point codes of the subgroup
    _coords: dict = dc_field(default_factory=dict, repr=False)

    @staticmethod
    def for_generators(field: Field, codes) -> "FourierContext":
        codes = list(codes)
        if not codes:
            raise EmptyReference("Fourier context over empty generating set")
        basis = span_basis(field, codes)
        _, pivots = rref_mod(basis, field.ell) if basis.size else (basis, ())
        r = basis.shape[0]
        order = field.ell ** r
        if order > CAP_GROUP_ORDER:
            raise CapExceeded("fourier group order", order, CAP_GROUP_ORDER)
        # enumerate the subgroup and record coordinates (= digits at pivots)
        import itertools

        elements = []
        coords = {}
        for combo in itertools.product(range(field.ell), repeat=r):
            vec = (np.array(combo, dtype=np.int64) @ basis) % field.ell if r else np.zeros(field.dim, dtype=np.int64)
            code = int(field.encode_batch(vec.reshape(1, -1))[0])
            elements.append(code)
            coords[code] = tuple(combo)
        elements.sort()
        return FourierContext(field, basis, tuple(pivots), elements, coords)

    @property
    def rank(self) -> int:
        return self.basis.shape[0]

    @property
    def order(self) -> int:
        return len(self.elements)

    def coords(self, code: int):
        try:
            return self._coords[code]
        except KeyError:
            raise FieldMismatch(f"point {code} not in the Fourier group") from None

    def dual_vectors(self):
        import itertools

        return itertools.product(range(self.field.ell), repeat=self.rank)

    def char_value(self, dual, code: int) -> complex:
        c = self.coords(code)
        phase = sum(a * x for a, x in zip(dual, c)) % self.field.ell
        return cmath.exp(2j * cmath.pi * phase / self.field.ell)

    def kernel(self, dual):
        """Sorted codes of {x in G : <dual, coords(x)> = 0}."""
        ell = self.field.ell
        return sorted(
            code
            for code in self.elements
            if sum(a * x for a, x in zip(dual, self._coords[code])) % ell == 0
        )

    # ---- transforms ---------------------------------------------------

    def coeff(self, subset, dual) -> complex:
        """hat{1_A}(chi) = (1/|G|) sum_{x in G} 1_A(x) conj(chi(x))."""
        sub = set(subset)
        total = 0j
        for code in self.elements:
            if code in sub:
                total += self.char_value(dual, code).conjugate()
        return total / self.order

    def all_coeffs(self, subset):
        """dict dual vector -> coefficient, for the indicator of subset."""
        return {tuple(d): self.coeff(subset, d) for d in self.dual_vectors()}

    def parseval_check(self, subset):
        """(sum |coeff|^2, E[1_A], abs error) — Parseval for an indicator."""
        coeffs = self.all_coeffs(subset)
        lhs = sum(abs(c) ** 2 for c in coeffs.values())
        rhs = len(set(subset) & set(self.elements)) / self.order
        return lhs, rhs, abs(lhs - rhs)

    def inversion_check(self, subset):
        """Max pointwise error of f(x) = sum_chi hat f(chi) chi(x)."""
        coeffs = self.all_coeffs(subset)
        sub = set(subset)
        worst = 0.0
        for code in self.elements:
            val = sum(c * self.char_value(d, code) for d, c in coeffs.items())
            worst = max(worst, abs(val - (1.0 if code in sub else 0.0)))
        return worst

    def heavy_characters(self, subset, eps: float, include_trivial: bool = False):
        """Characters with |coeff| >= eps (1e-9 guard band), sorted by dual vector."""
        out = []
        for dual, c in sorted(self.all_coeffs(subset).items()):
            if not include_trivial and all(a == 0 for a in dual):
                continue
            if abs(c) >= eps - GUARD:
                out.append((dual, c))
        return out

    # ---- CSV interchange ---------------------------------------------

    def coeffs_csv(self, subset) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["dual_vector", "re", "im", "abs"])
        for dual, c in sorted(self.all_coeffs(subset).items()):
            writer.writerow(
                [
                    " ".join(str(a) for a in dual),
                    f"{c.real:.12e}",
                    f"{c.imag:.12e}",
                    f"{abs(c):.12e}",
                ]
            )
        return buf.getvalue()
