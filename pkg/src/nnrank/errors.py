"""Shared exception and warning types.

Every error raised by this package derives from :class:`NNRankError`, so the
CLI can map any library failure to a machine-readable error line and a stable
exit code. Subclasses live next to the code that raises them; only the types
shared across modules are defined here.
"""

from __future__ import annotations


class NNRankError(Exception):
    """Base class for all errors raised by nnrank."""


class ClampWarning(UserWarning):
    """A requested size exceeded what the data allows and was clamped.

    Emitted when a subsample request exceeds the available rows, when k
    exceeds the visible pool size, or when a ranking is shorter than the
    requested cutoff p.
    """
