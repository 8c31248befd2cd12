"""Exception types raised across the package."""


class ChainmasError(Exception):
    """Base class for all package errors."""


# ledger
class EmptyLeaves(ChainmasError, ValueError):
    pass


class NonMonotonicTime(ChainmasError, ValueError):
    pass


# identity
class RegistrationError(ChainmasError, ValueError):
    pass


class DuplicateAddress(RegistrationError):
    pass


class DuplicateAgentId(RegistrationError):
    pass


class EmptyField(RegistrationError):
    pass


class MalformedKey(RegistrationError):
    pass


class UnknownAgent(ChainmasError, KeyError):
    pass


# messaging
class MessageRejected(ChainmasError):
    """A message failed transmission or verification checks."""

    reason = "rejected"


class StaleMessage(MessageRejected):
    reason = "Stale"


class BadSignature(MessageRejected):
    reason = "BadSignature"


class UnknownSender(MessageRejected):
    reason = "UnknownSender"


class SenderMismatch(MessageRejected):
    reason = "SenderMismatch"


class DuplicateMessage(MessageRejected):
    reason = "DuplicateMessage"


class SelfAddressed(MessageRejected):
    reason = "SelfAddressed"


class UnknownTask(ChainmasError, KeyError):
    pass


# allocation / incentive / simulation
class EmptyEligibleSet(ChainmasError, ValueError):
    pass


class AllZeroVector(ChainmasError, ValueError):
    pass


class CorpusExhausted(ChainmasError, RuntimeError):
    pass


class ConfigError(ChainmasError, ValueError):
    pass
