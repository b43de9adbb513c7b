"""Shared exception hierarchy.

Every error raised by this package derives from WeboracleError so callers
can catch one base type at process boundaries (CLI, benchmark runner).
Modules define their own subclasses next to the code that raises them;
only errors needed across module boundaries live here.
"""

from __future__ import annotations


class WeboracleError(Exception):
    """Base class for all package errors."""


class GatewayUnavailable(WeboracleError):
    """The model gateway could not produce a completion."""


class ReplayDivergence(WeboracleError):
    """A replayed prompt does not match the recorded transcript.

    Carries enough context to show the first diverging exchange.
    """

    def __init__(self, index: int, expected_prompt: str, got_prompt: str):
        self.index = index
        self.expected_prompt = expected_prompt
        self.got_prompt = got_prompt
        super().__init__(
            f"prompt {index} diverges from the recorded transcript\n"
            f"--- recorded ---\n{_clip(expected_prompt)}\n"
            f"--- replayed ---\n{_clip(got_prompt)}"
        )


def _clip(text: str, limit: int = 400) -> str:
    if len(text) <= limit:
        return text
    return text[:limit] + f"... [{len(text) - limit} more chars]"
