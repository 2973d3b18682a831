"""Exception hierarchy shared across the package."""


class TodsimError(Exception):
    """Base class for all package errors."""


class SchemaError(TodsimError):
    """A structured document (corpus file, model file, message) violates its schema."""

    def __init__(self, message: str, *, source: str = "", path: str = ""):
        self.source = source
        self.path = path
        prefix = "".join(f"[{p}] " for p in (source, path) if p)
        super().__init__(prefix + message)


class PreconditionError(TodsimError):
    """An operation was called with inputs that violate its contract."""


class ConfigurationError(TodsimError):
    """Run configuration is inconsistent (missing scorer, schema mismatch, ...)."""


class ProtocolError(TodsimError):
    """Wire-protocol violation. Carries the offending payload when available."""

    def __init__(self, message: str, payload: str | None = None):
        self.payload = payload
        if payload is not None:
            message = f"{message} (payload: {payload!r})"
        super().__init__(message)


class VersionMismatchError(ProtocolError):
    """Peer speaks a different protocol version."""


class RoleMismatchError(ProtocolError):
    """Peer offered a role other than the one expected."""


class TransportError(ProtocolError):
    """The underlying channel (pipe or socket) failed."""


class AgentUnresponsiveError(ProtocolError):
    """No reply arrived within the configured timeout."""


class EngineError(TodsimError):
    """An agent failed mid-session; the partial session is attached."""

    def __init__(self, message: str, partial_session=None):
        self.partial_session = partial_session
        super().__init__(message)


class TrainingDivergedError(TodsimError):
    """Policy weights exceeded the divergence guard during training."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)
