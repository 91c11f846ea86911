"""Exception hierarchy shared by every pipeline stage."""


class IcsTraceError(Exception):
    """Base class for all errors raised by this package."""


# -- protocol -----------------------------------------------------------------


class ProtocolError(IcsTraceError, ValueError):
    """A byte string could not be decoded as TPKT/COTP/S7."""

    reason = "protocol_error"


class TruncatedFrame(ProtocolError):
    reason = "truncated_frame"


class BadVersion(ProtocolError):
    reason = "bad_version"


class TruncatedPdu(ProtocolError):
    reason = "truncated_pdu"


class BadMagic(ProtocolError):
    reason = "bad_magic"


class EmptyParameters(ProtocolError):
    reason = "empty_parameters"


class UnsupportedFunction(IcsTraceError, ValueError):
    """Token combination cannot be serialized into an S7 request."""


# -- ingest -------------------------------------------------------------------


class IoFailure(IcsTraceError, OSError):
    pass


class InvalidConfig(IcsTraceError, ValueError):
    pass


# -- features -----------------------------------------------------------------


class NoValidSessions(IcsTraceError, ValueError):
    pass


class EmptyCorpus(IcsTraceError, ValueError):
    pass


class UnknownWindow(IcsTraceError, KeyError):
    pass


# -- clustering ---------------------------------------------------------------


class DimensionMismatch(IcsTraceError, ValueError):
    pass


class EmptySeedGroup(IcsTraceError, ValueError):
    pass


class InvalidSeeds(IcsTraceError, ValueError):
    pass


class InsufficientSamples(IcsTraceError, ValueError):
    pass


# -- metrics ------------------------------------------------------------------


class LengthMismatch(IcsTraceError, ValueError):
    pass


class SingleCluster(IcsTraceError, ValueError):
    pass


class DegenerateK(IcsTraceError, ValueError):
    pass


class EmptyOrganization(IcsTraceError, ValueError):
    pass


# -- pipeline -----------------------------------------------------------------


class StageError(IcsTraceError):
    """Any failure inside the pipeline, tagged with the stage that raised it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
