"""Exception types shared across the orchestrator packages."""

from __future__ import annotations


class VibetunerError(Exception):
    """Base class for every error raised by this package."""


# --- requirements ---------------------------------------------------------

class EmptyDocument(VibetunerError):
    """The requirements document contained no parseable text."""


class MalformedSection(VibetunerError):
    """A recognized section heading carried content that cannot be parsed."""

    def __init__(self, section: str, detail: str = ""):
        self.section = section
        self.detail = detail
        msg = section if not detail else f"{section}: {detail}"
        super().__init__(msg)


# --- bus ------------------------------------------------------------------

class UnknownAgent(VibetunerError):
    """The named agent was never attached to the bus or registry."""


class DeadRecipient(VibetunerError):
    """The recipient was attached once but has since terminated."""


# --- agents ---------------------------------------------------------------

class Unauthorized(VibetunerError):
    """The requester lacks the authority to spawn this role."""


class RosterLimitExceeded(VibetunerError):
    """The roster already holds the configured number of live agents."""


class TerminatedAgent(VibetunerError):
    """Operation attempted on an agent already terminated."""


# --- tuning ---------------------------------------------------------------

class DuplicateVersion(VibetunerError):
    """A candidate with this version string is already registered."""


class UnknownVersion(VibetunerError):
    """No candidate with this version string exists."""


class IllegalTransition(VibetunerError):
    """The requested status change is not allowed from the current status."""


class ExhaustedSpace(VibetunerError):
    """Every lattice point of the parameter space has been visited."""


class UnknownStrategy(VibetunerError):
    """No search strategy is registered under this name."""


# --- execution ------------------------------------------------------------

class NegativeInput(VibetunerError):
    """Point accounting rejects negative elapsed time or GPU counts."""


class NonPositiveDim(VibetunerError):
    """Matrix dimensions must be positive."""


class NonPositivePeak(VibetunerError):
    """Efficiency needs a positive peak throughput denominator."""


class ShapeMismatch(VibetunerError):
    """The two matrices do not share a shape."""


class ResourceOverflow(VibetunerError):
    """Tile parameters exceed the modeled on-chip memory budget."""


class BuildFailed(VibetunerError):
    def __init__(self, log: str):
        self.log = log
        super().__init__("build failed")


class RunFailed(VibetunerError):
    def __init__(self, log: str):
        self.log = log
        super().__init__("run failed")


class MetricParseError(VibetunerError):
    """Job output contained no parseable METRIC lines."""


class TransferFailed(VibetunerError):
    """Copying sources to the remote working directory failed."""


class SubmitRejected(VibetunerError):
    """The remote scheduler refused the submission."""


class PollTimeout(VibetunerError):
    """The remote job did not reach a terminal state in time."""


class FetchFailed(VibetunerError):
    """Collecting remote job outputs failed."""


# --- telemetry ------------------------------------------------------------

class StorageFailure(VibetunerError):
    """The append-only event log could not be written."""


# --- cli ------------------------------------------------------------------

class DirNotEmpty(VibetunerError):
    """Refusing to scaffold into a non-empty directory."""


class NotAProject(VibetunerError):
    """The directory does not hold an initialized project."""


class ConfigInvalid(VibetunerError):
    """The project configuration fails validation."""


class FixtureParseError(VibetunerError):
    """The replay fixture file is malformed."""
