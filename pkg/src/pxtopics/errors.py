"""Exception types raised across the pipeline."""


class PxError(Exception):
    """Base class for all pipeline errors."""


# --- corpus loading ---

class MalformedRecord(PxError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateId(PxError):
    pass


class UnknownColumn(PxError):
    pass


class UnknownTopicColumn(PxError):
    pass


class NonBinaryLabel(PxError):
    pass


# --- classification ---

class TemplatePlaceholderMissing(PxError):
    pass


class UnknownLabel(PxError):
    pass


class EmptyResponse(PxError):
    pass


class BackendUnavailable(PxError):
    pass


class ParseFailed(PxError):
    pass


class UnredactedText(PxError):
    """A comment still matching a PHI rule was about to leave the machine."""


# --- evaluation ---

class LengthMismatch(PxError):
    pass


class EmptyInput(PxError):
    pass


class TooFewRuns(PxError):
    pass


class AnnotatorCountMismatch(PxError):
    pass


# --- association statistics ---

class DegenerateTable(PxError):
    pass


class ConstantInput(PxError):
    pass


class SingleGroup(PxError):
    pass


class SeparationDetected(PxError):
    pass


class OutOfRange(PxError):
    pass


# --- configuration ---

class ConfigInvalid(PxError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))
