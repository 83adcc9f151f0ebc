"""Exception hierarchy for the verifier."""


class FairverError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(FairverError):
    """A model/schema/query document is malformed; the message names the field."""


class DimensionError(FormatError):
    """Layer shapes are inconsistent; the message names the 1-based layer index."""


class InputError(FairverError):
    """A concrete input vector does not match the network's input arity."""


class QueryError(FairverError):
    """A fairness query is invalid against the attribute schema."""


class UnsupportedModelError(FairverError):
    """The operation does not support this network's output activation or arity."""


class EncodingError(FairverError):
    """A verification query cannot be encoded (e.g. non-integer bounds on an integer attribute)."""


class SolverNotFoundError(FairverError):
    """No SMT solver command could be resolved."""


class SolverBackendError(FairverError):
    """The solver process crashed or produced garbled output (distinct from an unknown result)."""


class SolverProtocolError(SolverBackendError):
    """The solver violated the expected protocol, e.g. reported sat but gave no model."""


class OracleCapError(FairverError):
    """A brute-force enumeration would exceed the configured pair/point cap."""


class ReplayError(FairverError):
    """A stored result could not be replayed (missing artifacts, stale inputs)."""
