"""Exception types shared across the package."""


class RacebenchError(Exception):
    """Base class for all racebench errors."""


class ConfigError(RacebenchError, ValueError):
    """Bad configuration value, file, or CLI argument (exit code 2)."""


class GridParseError(ConfigError):
    """Occupancy-grid raster failed to parse; message names the byte offset."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TrackFormatError(ConfigError):
    """Centerline / raceline CSV violates the documented schema."""


class SingularSpeedError(RacebenchError, ValueError):
    """Dynamic single-track equations evaluated below the low-speed cutoff."""


class IntegrationDivergedError(RacebenchError):
    """Integrator produced a non-finite state; carries the offending state."""

    def __init__(self, state):
        super().__init__(f"integration diverged, state={state}")
        self.state = state


class PoseInCollisionError(RacebenchError):
    """Scan or episode requested from a pose inside an obstacle."""


class DegenerateBeliefError(RacebenchError):
    """All particle weights collapsed to zero; caller must reinitialise."""


class PlannerError(RacebenchError):
    """Planner raised during an episode; carries the control-step index."""

    def __init__(self, step_index, cause):
        super().__init__(f"planner failed at control step {step_index}: {cause!r}")
        self.step_index = step_index
        self.cause = cause


class QpInfeasibleError(RacebenchError):
    """Quadratic program has no feasible point."""


class TrainingDivergedError(RacebenchError):
    """TD3 update produced a non-finite loss; carries the training step."""

    def __init__(self, step):
        super().__init__(f"training diverged at step {step}")
        self.step = step
