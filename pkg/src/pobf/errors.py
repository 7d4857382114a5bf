"""Exception hierarchy for the pipeline.

Everything raised on purpose derives from :class:`PobfError` so callers (and
the CLI) can separate engine failures from programming errors.
"""


class PobfError(Exception):
    """Base class for all engine errors."""


class ManifestParseError(PobfError):
    """A manifest line is not valid JSON or misses required fields."""


class ManifestValidationError(PobfError):
    """A record violates a manifest invariant (duplicate id, bad box, ...)."""


class ConversionError(PobfError):
    """Source annotation files are inconsistent (e.g. dangling references)."""


class GeometryError(PobfError):
    """Dimension mismatch or other raster/box precondition failure."""


class DegenerateMaskError(GeometryError):
    """The box covers the whole image: there is nothing outside to repaint."""


class ProtocolError(PobfError):
    """A backend replied with values outside the wire contract."""


class BackendUnavailable(PobfError):
    """A backend stayed unreachable/5xx after the bounded retries."""


class BackendMisbehavior(PobfError):
    """A backend replied in-protocol but with impossible content."""


class StoreError(PobfError):
    """Candidate store layout violation (collision, missing artifact)."""


class SelectionError(PobfError):
    """Selection inputs are inconsistent with the candidate store."""


class EvalError(PobfError):
    """Predictions do not line up one-to-one with the manifest split."""


class ConfigError(PobfError):
    """Run configuration is malformed or incomplete."""


class MissingStageError(PobfError):
    """A pipeline stage was invoked before its prerequisite stage."""

    def __init__(self, stage: str, missing_path: str):
        super().__init__(f"stage '{stage}' has not produced {missing_path} yet")
        self.stage = stage
        self.missing_path = missing_path
