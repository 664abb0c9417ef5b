"""Exception types shared across the package.

Simulation errors (anything derived from ``SimulationError``) are the ones an
environment converts into a failed episode; the rest signal misuse of an API
and propagate to the caller.
"""


class SimulationError(Exception):
    """A numerical model left its domain of validity."""


class NonFiniteStateError(SimulationError):
    """An integrator or model produced NaN/inf components."""


class SingularJacobianError(SimulationError):
    """Newton iteration could not produce a usable step."""


class MaxIterationsError(SimulationError):
    """An iterative solver hit its iteration budget without converging."""


class DegenerateLevelError(SimulationError):
    """Reactor level dropped below the model's validity floor."""


class DegenerateVolumeError(SimulationError):
    """A vessel volume dropped below the model's validity floor."""


class ZeroRecycleFlowError(SimulationError):
    """Recycle-stream concentrations requested with zero recycle flow."""


class TemperatureOutOfRangeError(SimulationError):
    """Temperature left the range where the fitted growth laws hold."""


class ZeroModifierError(SimulationError):
    """Elution isotherm evaluated with a vanishing modifier concentration."""


class EpisodeFinishedError(Exception):
    """step() called on an episode that already terminated or timed out."""


class NoFeasibleSteadyStateError(Exception):
    """No multi-start candidate produced a feasible converged steady state."""


class IllConditionedKernelError(Exception):
    """GP kernel matrix stayed indefinite after jitter escalation."""


class DimMismatchError(Exception):
    """A recorded transition does not match the dataset's declared shapes."""


class InvalidEpisodeError(Exception):
    """Transition appended to a dataset after its episode was closed."""


class FormatVersionMismatchError(Exception):
    """Stored dataset uses an unsupported format version."""


class CorruptRowError(Exception):
    """A dataset row could not be parsed against the declared schema."""


class EmptyDatasetError(Exception):
    """Statistics requested for a dataset with no rows."""
