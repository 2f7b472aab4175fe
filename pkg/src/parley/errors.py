"""Exception types raised across the package."""

from __future__ import annotations


class ParleyError(Exception):
    """Base class for every error raised by this package."""


class CompositeProtocolError(ParleyError):
    """A protocol mixes category traits and cannot be classified."""


class UnknownRoleError(ParleyError):
    """A role reference does not resolve against the known protocols."""


class ProtocolViolationError(ParleyError):
    """A meta-protocol message arrived that the current state forbids."""


class TransportDownError(ParleyError):
    """The underlying transport failed while a selection was running."""


class CyclicFatherRelationError(ParleyError):
    """The declared father relation of a protocol is not a forest."""


class PointOutOfRangeError(ParleyError):
    """A recovery point does not fit the journal it is applied to."""


class NoViableRoleError(ParleyError):
    """Every role of a collection has been removed."""


class NoDeactivatedRoleError(ParleyError):
    """Reactivation was requested but no deactivated instance remains."""


class UnknownReceiverError(ParleyError):
    """A message was scheduled for an agent id nobody registered."""


class BudgetExceededError(ParleyError):
    """The simulation still had pending work at its tick budget."""


class ParseError(ParleyError):
    """A protocol or scenario document is syntactically unusable."""


class UnresolvedReferenceError(ParleyError):
    """A scenario references a protocol, role or agent that is absent."""
