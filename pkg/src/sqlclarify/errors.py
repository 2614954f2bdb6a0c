"""Exception hierarchy shared across the package."""


class ClarifyError(Exception):
    """Base class for all errors raised by this package."""


class SchemaFormatError(ClarifyError):
    """A schema or dataset file is malformed; carries line/record context."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        loc = ""
        if path is not None:
            loc = f" [{path}" + (f":{line}" if line is not None else "") + "]"
        super().__init__(message + loc)
        self.path = path
        self.line = line


class DatasetValidationError(ClarifyError):
    """A loaded record violates an invariant (duplicate db_id, unknown db, bad SQL)."""


class SqlSyntaxError(ClarifyError):
    """SQL text outside the supported subset; carries a token position."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message if position is None else f"{message} (at token {position})")
        self.position = position


class NameResolutionError(ClarifyError):
    """An identifier in SQL does not resolve against the schema."""

    def __init__(self, name: str, message: str | None = None):
        super().__init__(message or f"cannot resolve name {name!r}")
        self.name = name


class UnsupportedConstructError(ClarifyError):
    """A parsed query uses a clause the intermediate grammar does not cover."""


class TemplateError(ClarifyError):
    """Restatement template table is missing a rule or is malformed."""


class ConfigError(ClarifyError):
    """Inconsistent dimensions, missing artifacts, or bad configuration values."""


class TrainingError(ClarifyError):
    """Training aborted (non-finite loss, unusable corpus)."""


class GatewayError(ClarifyError):
    """A parser adapter failed; carries adapter diagnostics."""

    def __init__(self, message: str, diagnostics: str | None = None):
        super().__init__(message if not diagnostics else f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


class SessionError(ClarifyError):
    """Invalid interactive-session transition or unknown session."""
