"""Exception hierarchy shared across the emulator."""


class EmulationError(Exception):
    """Base class for all emulator errors."""


class TopologyError(EmulationError):
    """Invalid federation topology (duplicate address, missing gateway, ...)."""


class RouteError(EmulationError):
    """Route resolution failure."""


class UnknownAddressError(RouteError):
    """Address is not assigned to any interface."""


class UnreachableError(RouteError):
    """No path exists between the two endpoints."""


class SubnetExhaustedError(TopologyError):
    """No free address left for a bridged container."""


class PortInUseError(EmulationError):
    """The (address, port) pair already has a bound service."""


class RefusedError(EmulationError):
    """Destination endpoint reachable but nothing bound at the port."""


class ProtocolError(EmulationError):
    """Malformed wire input; the only error parsers are allowed to raise."""


class ArchiveError(EmulationError):
    """Malformed image archive."""


class BadMagicError(ArchiveError):
    """Archive does not start with the expected magic."""


class DigestMismatchError(ArchiveError):
    """Archive digest does not match its content (corruption)."""


class RegistryError(EmulationError):
    """Image registry failure (unknown image, duplicate ref, ...)."""


class WorkflowError(EmulationError):
    """Invalid workflow spec (cycle, unknown reference, ...)."""


class ScenarioError(EmulationError):
    """Scenario text rejected; carries the offending line number."""

    def __init__(self, message: str, line_no: int | None = None, line: str | None = None):
        self.line_no = line_no
        self.line = line
        if line_no is not None:
            message = f"line {line_no}: {message}"
            if line is not None:
                message += f" ({line!r})"
        super().__init__(message)


class CommandError(EmulationError):
    """REPL/script command rejected; message quotes the command."""
