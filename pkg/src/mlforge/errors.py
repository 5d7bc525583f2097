"""Exception hierarchy shared across the package."""
from __future__ import annotations


class MlforgeError(Exception):
    """Base class for every error raised by this package."""


class BackendError(MlforgeError):
    """The text-generation backend failed, is unreachable, or ran dry."""


class ReplayDivergenceError(BackendError):
    """A replayed run issued a request that does not match the transcript.

    Fatal by design: divergence means the code path no longer produces the
    recorded request stream, so the transcript cannot vouch for the run.
    """

    def __init__(self, index: int, expected_digest: str, actual_digest: str):
        super().__init__(
            f"replay diverged at request #{index}: transcript digest "
            f"{expected_digest[:12]} != request digest {actual_digest[:12]}"
        )
        self.index = index
        self.expected_digest = expected_digest
        self.actual_digest = actual_digest


class ResponseParseError(MlforgeError):
    """A backend response stayed unparseable after all repair prompts."""

    def __init__(self, message: str, raw_text: str):
        super().__init__(message)
        self.raw_text = raw_text


class GenerationExhaustedError(MlforgeError):
    """A module hit its attempt cap without producing verified code."""

    def __init__(self, kind: str, attempts: tuple, partial=()):
        super().__init__(
            f"generation exhausted for module '{kind}' after {len(attempts)} attempts"
        )
        self.kind = kind
        self.attempts = tuple(attempts)
        self.partial = tuple(partial)


class PlanRejectedError(MlforgeError):
    """No conforming data-contract plan emerged within the round limit."""

    def __init__(self, violations: list[str], rounds: int):
        super().__init__(
            f"plan rejected after {rounds} rounds; last violations: {violations}"
        )
        self.violations = list(violations)
        self.rounds = rounds


class SyntheticDataExhaustedError(MlforgeError):
    """A synthetic-data program could not be produced within its attempt cap."""


class AssemblyError(MlforgeError):
    """Program assembly was attempted from an unusable artifact set."""


class SandboxError(MlforgeError):
    """Sandbox infrastructure failed (distinct from the tested code failing)."""


class EvaluationProtocolError(MlforgeError):
    """An evaluated program did not follow the result-document protocol."""
