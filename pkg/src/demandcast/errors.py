"""Error types shared across the toolkit.

Every error carries a short machine-readable ``code`` so the CLI can emit
single-line ``code: message`` diagnostics.
"""


class DemandcastError(Exception):
    code = "error"


class SchemaError(DemandcastError):
    """Input file or feature schema does not match the declared layout."""

    code = "schema"


class GridError(DemandcastError):
    """Interval grid is malformed: misaligned origin, gaps, or too short."""

    code = "grid"


class ShapeError(DemandcastError):
    """Array dimensions disagree with the operation's contract."""

    code = "shape"


class NumericError(DemandcastError):
    """NaN/Inf detected, or a loss diverged."""

    code = "numeric"


class TapeError(DemandcastError):
    """Backward called without a matching forward, or a tape reused."""

    code = "tape"


class ConfigError(DemandcastError):
    """Invalid or inconsistent run configuration."""

    code = "config"
