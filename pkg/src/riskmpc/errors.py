"""Exception hierarchy shared by all riskmpc modules."""


class RiskMPCError(Exception):
    """Base class for all package errors."""


class DimensionError(RiskMPCError, ValueError):
    pass


class DomainError(RiskMPCError, ValueError):
    pass


class CapacityError(RiskMPCError):
    """An exhaustive oracle was asked to enumerate beyond its limit."""


class ConfigurationError(RiskMPCError, ValueError):
    pass


class TreeConsistencyError(RiskMPCError, ValueError):
    pass


class TopologyError(RiskMPCError, ValueError):
    pass


class AssemblyError(RiskMPCError, ValueError):
    pass


class InfeasibleSharingError(RiskMPCError):
    """No enabled grid-forming unit is available to absorb an imbalance."""


class BlackoutError(RiskMPCError):
    """The imbalance exceeds the capacity of every grid-forming unit."""


class PowerFlowDivergence(RiskMPCError):
    pass
