class ConfigError(ValueError):
    """Scenario or argument validation failure."""


class NumericalFailure(RuntimeError):
    """Integrator blow-up, singular G, or Euler-angle singularity."""


class SwitchInfeasible(RuntimeError):
    """The switching MILP has no feasible point.

    Only possible when u_u is below the state-dependent bound mu(t); ``mu`` carries
    that value when the caller could evaluate it.
    """

    def __init__(self, message: str, rho_max: float, mu: float | None = None):
        super().__init__(message)
        self.rho_max = rho_max
        self.mu = mu


class PlanningFailure(RuntimeError):
    """Cooperative path planning found no conflict-free plan."""
