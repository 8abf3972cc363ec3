"""Exception hierarchy shared by all modules.

Exit-code mapping used by the CLI:
  2 -> InputError (malformed input, failed validation of user data)
  3 -> CapExceeded (resource cap hit)
  4 -> LemmaViolation / AssertionFailure (a checked mathematical claim failed)
"""
from __future__ import annotations


class MSchemeError(Exception):
    """Base class for all library errors."""


class InputError(MSchemeError):
    """Malformed or inconsistent user input."""


class FieldMismatch(InputError):
    """Objects over different prime fields / ambient dimensions were mixed."""


class ArityMismatch(InputError):
    """A map or tuple was used at the wrong arity."""


class IndexOutOfRange(InputError):
    """A code, coordinate or block id outside its valid range."""


class EmptyReference(InputError):
    """A block/set reference that resolves to nothing."""


class NotInGroup(InputError):
    """A matrix expected to lie in the acting group does not."""


class CapExceeded(MSchemeError):
    """A size/enumeration cap was hit before the operation finished."""

    def __init__(self, what: str, needed: int, cap: int):
        self.what = what
        self.needed = needed
        self.cap = cap
        super().__init__(f"cap exceeded for {what}: needed {needed} > cap {cap}")


class LemmaViolation(MSchemeError):
    """A conclusion that should hold under the checked preconditions failed."""


class NotBlockUnion(LemmaViolation):
    """A set that should be a union of blocks is not."""


class DepthExhausted(MSchemeError):
    """An operation needed more scheme depth than available."""

    def __init__(self, detail: str, trace=None):
        self.trace = trace
        super().__init__(detail)


class PreconditionUnmet(MSchemeError):
    """A named lemma precondition does not hold for the given arguments."""

    def __init__(self, name: str, detail: str = ""):
        self.name = name
        super().__init__(f"precondition unmet: {name}" + (f" ({detail})" if detail else ""))


class GateUnmet(PreconditionUnmet):
    """The entry gate (sumset-growth window) of a shrinking step fails."""


class EnergyTooLow(PreconditionUnmet):
    """Additive energy below the threshold required by a dense-piece step."""
