"""Executable partition systems on finite vector spaces.

Materializes depth-m partition systems (orbit-induced or hand-built) over
F_ell^d, validates their axioms exhaustively, and runs the constructive
refinement procedures (fibre shrinking, scheme powers, dense-piece
extraction, Fourier decomposition, density reduction) with every claimed
inequality re-checked exactly.
"""

__version__ = "0.1.0"
