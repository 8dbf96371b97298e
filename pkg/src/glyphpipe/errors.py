"""Exception hierarchy shared across the package.

Every domain error raised by glyphpipe derives from :class:`GlyphPipeError`,
so callers (and the CLI) can distinguish domain failures (exit code 1) from
usage errors and genuine bugs.
"""


class GlyphPipeError(Exception):
    """Base class for all domain errors raised by this package."""


class DivergedLoss(GlyphPipeError):
    """Training loss became NaN or infinite."""
