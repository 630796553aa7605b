"""
Exception hierarchy shared by the planner modules
"""

from enum import Enum


class DeploymentError(Exception):
    """Base class for every error raised by the planner"""


class InputError(DeploymentError, ValueError):
    """The caller supplied inconsistent or malformed input"""


class BoundsError(InputError):
    pass


class ModelError(InputError):
    pass


class ActionErrorKind(str, Enum):
    UNKNOWN_TYPE = "unknown_type"
    UNKNOWN_INSTANCE = "unknown_instance"
    UNKNOWN_INTERFACE_USE = "unknown_interface_use"
    STRONG_PORT_BIND = "strong_port_bind"
    DUPLICATE_BINDING = "duplicate_binding"
    MISSING_BINDING = "missing_binding"
    SELF_BINDING = "self_binding"
    INSTANCE_EXISTS = "instance_exists"
    STRONG_REQUIREMENT_UNCOVERED = "strong_requirement_uncovered"
    INVALID_PROVIDER = "invalid_provider"


class ActionError(InputError):
    """A reconfiguration action whose side condition does not hold"""

    def __init__(self, kind: ActionErrorKind, message: str):
        super().__init__(f"{kind.value}: {message}")
        self.kind = kind
        self.message = message


class OracleOverflow(DeploymentError):
    pass


class InternalError(DeploymentError):
    """A phase produced output that violates its own postconditions"""
