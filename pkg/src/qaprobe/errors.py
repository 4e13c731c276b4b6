"""Exception hierarchy shared across the harness.

Exit codes: 0 success, 2 config error, 3 provider error, 4 data error,
1 anything else.
"""


class QaprobeError(Exception):
    exit_code = 1


class ConfigError(QaprobeError):
    exit_code = 2


class ProviderError(QaprobeError):
    """Base for chat/embedding provider failures."""

    exit_code = 3


class TransportError(ProviderError):
    """Transient transport failure; eligible for retry."""


class NonRetryableProviderError(ProviderError):
    """Auth/quota/bad-request failures; retrying would not help."""


class GatewayExhaustedError(ProviderError):
    """All retry attempts failed."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class DataError(QaprobeError):
    """Fatal problem with input data (corpus files, export shortfall)."""

    exit_code = 4


class InputError(QaprobeError):
    """Caller passed an invalid value (empty text, bad dimensions)."""


class SyntaxBackendError(QaprobeError):
    """The syntactic analysis backend is unavailable or misbehaved."""


class SutError(QaprobeError):
    """The system under test failed to produce an answer."""


class SutTimeoutError(SutError):
    """The system under test exceeded its timeout; test is inconclusive."""


class MockScriptError(QaprobeError):
    """A scripted mock provider had no response for a prompt."""
