"""Exception hierarchy shared across the engine."""


class MusicAgentError(Exception):
    """Base class for all engine errors."""


# --- taxonomy / registry -------------------------------------------------

class InvalidName(MusicAgentError):
    pass


class DuplicateTask(MusicAgentError):
    pass


class TaskNotFound(MusicAgentError):
    pass


class DuplicateTool(MusicAgentError):
    pass


class UnknownTool(MusicAgentError):
    pass


class NegativeAttribute(MusicAgentError):
    pass


class NoCandidates(MusicAgentError):
    pass


# --- planner --------------------------------------------------------------

class EmptyRequest(MusicAgentError):
    pass


class NoPlanFound(MusicAgentError):
    pass


class MalformedSubTask(MusicAgentError):
    pass


class DuplicateId(MusicAgentError):
    pass


class BudgetTooSmall(MusicAgentError):
    pass


class InvalidGraph(MusicAgentError):
    def __init__(self, violations):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations) or "invalid graph")


# --- executor ---------------------------------------------------------------

class UnresolvedRef(MusicAgentError):
    pass


class ModalityMismatch(MusicAgentError):
    pass


class AdapterFailure(MusicAgentError):
    def __init__(self, message, exit_code=None, diagnostics=""):
        self.exit_code = exit_code
        self.diagnostics = diagnostics
        super().__init__(message)


class UnsupportedTask(MusicAgentError):
    pass


class CostExceedsBudget(MusicAgentError):
    pass


class ResourceTimeout(MusicAgentError):
    pass


# --- media ------------------------------------------------------------------

class NotWav(MusicAgentError):
    pass


class UnsupportedEncoding(MusicAgentError):
    pass


class ResampleRequired(MusicAgentError):
    pass


class NotMidi(MusicAgentError):
    pass


class TruncatedChunk(MusicAgentError):
    pass


class NoteTextParseError(MusicAgentError):
    def __init__(self, message, line):
        self.line = line
        super().__init__(f"line {line}: {message}")


class EmptyScore(MusicAgentError):
    pass


class Unsupported(MusicAgentError):
    pass


# --- responder / gateway -----------------------------------------------------

class ExecutionUnfinished(MusicAgentError):
    pass


class DecodeFailure(MusicAgentError):
    pass


class UnsupportedModality(MusicAgentError):
    pass


class ArtifactNotFound(MusicAgentError):
    pass


# --- llm bridge ----------------------------------------------------------------

class LlmUnavailable(MusicAgentError):
    pass


class ScriptExhausted(LlmUnavailable):
    """Mock backend ran out of matching entries.

    Subclasses LlmUnavailable so callers degrade the same way they would
    for a dead remote endpoint.
    """
