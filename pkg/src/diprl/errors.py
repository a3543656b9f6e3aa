"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array dimensions do not chain or match the declared interface."""


class NumericError(ValueError):
    """Non-finite values where finite ones are required."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class ProtocolError(RuntimeError):
    """Operation called outside its legal lifecycle (e.g. step after done)."""


class SamplingError(RuntimeError):
    """A sampling source cannot satisfy the request."""


class ParseError(ValueError):
    """Malformed on-disk record; message names the offending line."""


class ExpertError(RuntimeError):
    """Scripted expert cannot produce a plan (no reachable tree)."""


class ContractError(ValueError):
    """Caller violated a documented call contract."""


class SummaryError(ValueError):
    """Metrics summary requested over an empty row set."""
