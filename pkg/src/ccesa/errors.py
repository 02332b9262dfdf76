"""Exception types raised across the package."""

from __future__ import annotations


class CCESAError(Exception):
    """Base class for every error raised by this package."""


# -- secret sharing ---------------------------------------------------------


class InvalidThreshold(CCESAError, ValueError):
    pass


class FieldTooSmall(CCESAError, ValueError):
    pass


class DuplicateIndex(CCESAError, ValueError):
    pass


class InsufficientShares(CCESAError, ValueError):
    pass


class MixedOwner(CCESAError, ValueError):
    pass


class ShareMismatch(CCESAError):
    """Surplus shares do not lie on the polynomial fixed by the first ``t``."""


# -- key agreement / encryption ---------------------------------------------


class InvalidGroupElement(CCESAError, ValueError):
    pass


class AuthenticationFailure(CCESAError):
    pass


# -- protocol ---------------------------------------------------------------


class MissingPeerKey(CCESAError, KeyError):
    pass


class ReliabilityFailure(CCESAError):
    """The server could not strip every mask from the aggregate."""

    def __init__(self, non_informative, message: str | None = None):
        self.non_informative = tuple(sorted(non_informative))
        super().__init__(
            message
            or f"cannot unmask aggregate; non-informative nodes: {list(self.non_informative)}"
        )


# -- analysis ---------------------------------------------------------------


class InvalidRegime(CCESAError, ValueError):
    pass


class DomainError(CCESAError, ValueError):
    pass


# -- adversary --------------------------------------------------------------


class AttackFailed(CCESAError):
    """A partial-sum attack met a mask term whose seed is not recoverable."""

    def __init__(self, term, message: str | None = None):
        self.term = term
        super().__init__(message or f"uncancellable mask term {term}")


class TooLarge(CCESAError, ValueError):
    pass


# -- harness ----------------------------------------------------------------


class ConfigError(CCESAError, ValueError):
    pass
