"""Exception hierarchy shared across the package."""


class ScmechError(Exception):
    """Base class for all package errors."""


class DomainError(ScmechError, ValueError):
    """A parameter or bundle is outside its admissible region."""


class RichnessError(DomainError):
    """No preference in the configured parameter interval makes the two
    bundles indifferent."""


class InfeasibleRangeError(ScmechError, ValueError):
    """A bundle range cannot be supported as a strategy-proof mechanism
    on this domain (its induced breakpoints are not ordered)."""


class TractabilityError(ScmechError, RuntimeError):
    """An enumeration or tail walk exceeded its configured guard."""


class SpecParseError(ScmechError, ValueError):
    """A JSON spec (domain, distribution, mechanism, config) is malformed."""
