"""Exception hierarchy shared by all gainswitch modules."""


class GainSwitchError(Exception):
    """Base class for all package errors."""


class DomainError(GainSwitchError, ValueError):
    """Argument outside the mathematical domain of a closed-form relation."""


class ConfigError(GainSwitchError, ValueError):
    """Invalid or inconsistent configuration."""

    def __init__(self, message, issues=None):
        super().__init__(message)
        self.issues = list(issues or [])


class InputError(GainSwitchError, ValueError):
    """Data passed to an analysis or optics stage is unusable."""


class IntegratorDivergence(GainSwitchError, RuntimeError):
    """The stochastic integrator produced a non-finite state."""

    def __init__(self, step_index, message=None):
        self.step_index = int(step_index)
        super().__init__(message or f"integrator diverged at step {self.step_index}")
