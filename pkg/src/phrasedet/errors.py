"""Exception hierarchy shared across the engine.

Config problems and backend problems map to distinct CLI exit codes, so
they get distinct branches here.
"""


class EngineError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(EngineError):
    """A domain object or input file violates a structural invariant."""


class ConfigError(EngineError):
    """A run configuration is internally inconsistent or unusable."""


class BackendError(EngineError):
    """Base class for model-backend failures."""


class StaleBundleError(BackendError):
    """A replay bundle was recorded for a different prompt set."""


class RecordNotFoundError(BackendError):
    """A replay bundle has no record for the requested key."""


class BackendUnavailableError(BackendError):
    """A remote backend could not be reached after retries."""


class ProtocolError(BackendError):
    """A backend response or bundle file violates the wire schema."""
