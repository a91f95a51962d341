"""Exception hierarchy shared across the harness."""

from __future__ import annotations


class HarnessError(Exception):
    """Base class for every error raised by this package."""


class InvalidBoxGeometry(HarnessError, ValueError):
    pass


class MultipleOccurrences(HarnessError):
    def __init__(self, tag: str, count: int):
        super().__init__(f"tag <{tag}> occurs {count} times")
        self.tag = tag
        self.count = count


class MalformedAnswerJson(HarnessError, ValueError):
    pass


class StrayAnswerContent(MalformedAnswerJson):
    """The answer JSON parsed, but extra text surrounds it inside the tag."""


class MalformedToolCall(HarnessError, ValueError):
    pass


class NoParsableBox(HarnessError, ValueError):
    pass


class EmptyInput(HarnessError, ValueError):
    pass


class EmptyGroup(HarnessError, ValueError):
    pass


class MixedSamples(HarnessError, ValueError):
    pass


class GroupSizeMismatch(HarnessError, ValueError):
    pass


class UnknownSample(HarnessError, KeyError):
    def __init__(self, sample_id: str):
        super().__init__(f"unknown sample_id {sample_id!r}")
        self.sample_id = sample_id

    def __str__(self) -> str:
        return self.args[0]


class Unsatisfiable(HarnessError):
    pass


class UnknownPreset(HarnessError, KeyError):
    def __str__(self) -> str:
        return self.args[0]


class ParseError(HarnessError, ValueError):
    def __init__(self, path: str, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line
        self.reason = reason


class DuplicateSampleId(HarnessError, ValueError):
    def __init__(self, sample_id: str, line: int | None = None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"duplicate sample_id {sample_id!r}{where}")
        self.sample_id = sample_id
        self.line = line


class InvariantViolation(HarnessError, ValueError):
    def __init__(self, sample_id: str, reason: str):
        super().__init__(f"sample {sample_id!r}: {reason}")
        self.sample_id = sample_id
        self.reason = reason


class ConfigError(HarnessError, ValueError):
    pass


class BackendUnavailable(HarnessError):
    pass


class ToolUnavailable(HarnessError):
    pass
