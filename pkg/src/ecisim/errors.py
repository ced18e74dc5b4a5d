class EciError(Exception):
    """Base class for simulator errors."""


class BusyLine(EciError):
    """The line already has a transaction in flight; retry after deliveries."""


class IllegalDowngrade(EciError):
    pass


class UnknownTransaction(EciError):
    """A response matched no outstanding transaction (protocol or transport bug)."""


class ProtocolViolation(EciError):
    pass


class WriteUnderReadOnlySubset(EciError):
    pass


class DerivationUnsound(EciError):
    pass
