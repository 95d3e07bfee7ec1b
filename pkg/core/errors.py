"""
Error hierarchy for the citation-visibility toolkit.

Every failure the toolkit raises on purpose is a VisibilityError, so the CLI
can map "data problem" to exit status 1 with a single except clause.
"""

from typing import Dict, Optional


class VisibilityError(Exception):
    """Base class for all toolkit errors."""


# ============================================================================
# CORPUS
# ============================================================================

class MalformedUrl(VisibilityError):
    def __init__(self, url: str, reason: str = "not an absolute http(s) URL"):
        self.url = url
        self.reason = reason
        super().__init__(f"Malformed URL {url!r}: {reason}")


class IpHost(VisibilityError):
    def __init__(self, url: str, host: str):
        self.url = url
        self.host = host
        super().__init__(f"URL {url!r} has an IP-literal host {host!r}; no registered domain")


class SchemaError(VisibilityError):
    """A single input line failed validation."""

    def __init__(self, line_no: int, reason: str, field: Optional[str] = None):
        self.line_no = line_no
        self.reason = reason
        self.field = field
        where = f"line {line_no}"
        if field:
            where += f", field '{field}'"
        super().__init__(f"{where}: {reason}")


class DuplicateResponse(SchemaError):
    def __init__(self, line_no: int, key, response_id: str):
        self.key = key
        self.response_id = response_id
        super().__init__(
            line_no,
            f"duplicate response_id {response_id!r} in sample "
            f"{key.platform}/{key.topic}/{key.job_id}",
            field="response_id",
        )


class NoValidLines(VisibilityError):
    def __init__(self, n_errors: int):
        self.n_errors = n_errors
        super().__init__(f"No valid lines parsed ({n_errors} rejected)")


class NoRepeatedQueries(VisibilityError):
    pass


class MixedKeys(VisibilityError):
    pass


# ============================================================================
# METRICS / ESTIMATORS
# ============================================================================

class EmptySample(VisibilityError):
    pass


class EmptySampleCitations(VisibilityError):
    pass


class SingleRun(VisibilityError):
    pass


class SingleSample(VisibilityError):
    pass


class ZeroShare(VisibilityError):
    def __init__(self, domain: str):
        self.domain = domain
        super().__init__(
            f"Domain {domain!r} has zero share in at least one sample; "
            "restrict log-std to frequently-cited domains"
        )


class InsufficientRows(VisibilityError):
    pass


class TooFewDomains(VisibilityError):
    pass


class InvalidParameter(VisibilityError):
    pass


class GridExceedsSample(VisibilityError):
    pass


class StatisticUndefined(VisibilityError):
    """A statistic could not be evaluated on a (re)sample."""

    def __init__(self, message: str, replicate: Optional[int] = None):
        self.replicate = replicate
        if replicate is not None:
            message = f"replicate {replicate}: {message}"
        super().__init__(message)


class DegenerateRanks(StatisticUndefined):
    pass


# ============================================================================
# DRIFT / LEDGER
# ============================================================================

class ConflictingHash(VisibilityError):
    def __init__(self, url: str, job_id: str, existing: str, new: str):
        self.url = url
        self.job_id = job_id
        self.existing = existing
        self.new = new
        super().__init__(
            f"Conflicting checksum for ({url}, {job_id}): {existing[:12]}... vs {new[:12]}..."
        )


# ============================================================================
# CONFIGURATION / SYNTHETIC ENGINE
# ============================================================================

class ConfigError(VisibilityError):
    """Invalid configuration. ``diagnostics`` maps field name to problem."""

    def __init__(self, diagnostics: Dict[str, str]):
        self.diagnostics = dict(diagnostics)
        detail = "; ".join(f"{k}: {v}" for k, v in sorted(self.diagnostics.items()))
        super().__init__(f"Invalid configuration ({detail})")


class UnknownPreset(VisibilityError):
    def __init__(self, name: str, known):
        self.name = name
        super().__init__(f"Unknown preset {name!r}; known presets: {', '.join(sorted(known))}")


class ScheduleOutOfBounds(VisibilityError):
    pass
