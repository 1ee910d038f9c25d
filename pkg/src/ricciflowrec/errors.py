"""Exception hierarchy shared by the library and the CLI."""


class RicciFlowRecError(Exception):
    """Base class for all package errors."""


class ConfigError(RicciFlowRecError):
    """Invalid or inconsistent configuration."""


class DataError(RicciFlowRecError):
    """Malformed or insufficient input data."""


class SchemaError(DataError):
    """Artifact file has the wrong schema version or mixed provenance."""


class StageError(RicciFlowRecError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: BaseException | str):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")
