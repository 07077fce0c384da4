"""Structured errors: every failure carries a machine-readable category.

The CLI maps categories to distinct exit codes so pipelines can branch
on failure type instead of scraping message text.
"""

from __future__ import annotations


class ArthroRigError(Exception):
    """Base class; `category` is the stable machine-readable identifier."""

    category = "error"

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = context

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "message": str(self),
            "context": {k: str(v) for k, v in self.context.items()},
        }


class InputError(ArthroRigError):
    category = "input-error"


class ConfigError(ArthroRigError):
    category = "config-error"


class InsufficientDataError(ArthroRigError):
    category = "insufficient-data"


class DegenerateViewError(ArthroRigError):
    category = "degenerate-view"


class DegenerateMotionError(ArthroRigError):
    category = "degenerate-motion"


class DegenerateGeometryError(ArthroRigError):
    category = "degenerate-geometry"


class NoConsensusError(ArthroRigError):
    category = "no-consensus"


class NoOverlapError(ArthroRigError):
    category = "no-overlap"


class BehindCameraError(ArthroRigError):
    category = "behind-camera"


class RangeError(ArthroRigError):
    category = "range-error"


class FusionError(ArthroRigError):
    category = "fusion-error"


class ParseError(ArthroRigError):
    category = "parse-error"


class FormatError(ArthroRigError):
    category = "format-error"


class TruncationError(ArthroRigError):
    category = "truncation-error"


class OrderError(ArthroRigError):
    category = "order-error"


# CLI exit codes, one per category.  0 = success, 1 = unexpected crash.
EXIT_CODES = {
    "config-error": 2,
    "input-error": 3,
    "parse-error": 4,
    "format-error": 5,
    "truncation-error": 6,
    "order-error": 7,
    "insufficient-data": 8,
    "degenerate-view": 9,
    "degenerate-motion": 10,
    "degenerate-geometry": 11,
    "no-consensus": 12,
    "no-overlap": 13,
    "behind-camera": 14,
    "range-error": 15,
    "fusion-error": 16,
    "error": 17,
}


def exit_code_for(err: ArthroRigError) -> int:
    return EXIT_CODES.get(err.category, EXIT_CODES["error"])
