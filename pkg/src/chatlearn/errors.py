"""Exception taxonomy shared by every chatlearn module.

Each error carries a short machine-readable ``code`` so the wire protocol
can surface failures as structured error frames.
"""

from __future__ import annotations


class ChatLearnError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"

    def __init__(self, message: str = ""):
        super().__init__(message or self.__class__.__name__)
        self.message = message or self.__class__.__name__


class InvalidConfigError(ChatLearnError):
    code = "invalid-config"


class SessionClosedError(ChatLearnError):
    """An operation was attempted on a session past its lifetime."""

    code = "session-closed"


class WrongStateError(ChatLearnError):
    """The session is not in the state the operation requires."""

    code = "wrong-state"


class RoleTakenError(ChatLearnError):
    code = "role-taken"


class EmptyTextError(ChatLearnError):
    code = "empty-text"


class UnknownMessageError(ChatLearnError):
    code = "unknown-message"


class UnknownSessionError(ChatLearnError):
    code = "unknown-session"


class FeatureDisabledError(ChatLearnError):
    """Learning features are gated off for the session's condition."""

    code = "feature-disabled"


class InvalidRequestError(ChatLearnError):
    """The request is well-formed but not valid for this role or target."""

    code = "invalid-request"


class SelectionNotFoundError(ChatLearnError):
    """The highlighted text is not a substring of the source message."""

    code = "selection-not-found"


class MissingPlaceholderError(ChatLearnError):
    code = "missing-placeholder"


class ProviderUnavailableError(ChatLearnError):
    """Both the original model call and its single retry failed."""

    code = "provider-unavailable"


class ProviderTransportError(ChatLearnError):
    """A single model call failed; callers retry once before giving up."""

    code = "provider-transport"


class StageParseError(ChatLearnError):
    """A pipeline stage returned output that could not be parsed.

    ``stage`` identifies which stage failed (1 = extract, 2 = translate,
    3 = map) so degradation handling can report it.
    """

    code = "stage-parse"

    def __init__(self, stage: int, message: str = ""):
        super().__init__(message or f"stage {stage} output unparseable")
        self.stage = stage


class DimensionMismatchError(ChatLearnError):
    code = "dimension-mismatch"


class ZeroVectorError(ChatLearnError):
    code = "zero-vector"


class UnknownEntryError(ChatLearnError):
    code = "unknown-entry"


class NeverTriggeredError(ChatLearnError):
    """record_interaction requires the entry to have been shown at least once."""

    code = "never-triggered"


class OverTimeError(ChatLearnError):
    """Recall answers arrived outside the configured time budget."""

    code = "over-time"


class ScriptError(ChatLearnError):
    code = "script-invalid"


class StepFailureError(ChatLearnError):
    """A replay step failed; ``index`` is the zero-based step position."""

    code = "step-failure"

    def __init__(self, index: int, cause: Exception):
        super().__init__(f"step {index} failed: {cause}")
        self.index = index
        self.cause = cause


class ProtocolError(ChatLearnError):
    code = "protocol-error"
