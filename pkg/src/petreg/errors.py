"""Exception hierarchy shared by the numerics, engine and CLI layers."""


class PetregError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(PetregError, ValueError):
    pass


class InputError(PetregError, ValueError):
    pass


class NoSolutionError(PetregError):
    """A matrix equation has no (unique) solution for the given data."""


class NumericalError(PetregError):
    pass


class CausalityError(PetregError, ValueError):
    pass


class DivergenceError(PetregError):
    """A state or derivative became non-finite during integration."""

    def __init__(self, message, t=None, agent=None):
        super().__init__(message)
        self.t = t
        self.agent = agent


class ConfigError(PetregError, ValueError):
    pass


class GraphError(ConfigError):
    """The communication graph has no directed spanning tree rooted at the leader."""

    def __init__(self, message, unreachable=()):
        super().__init__(message)
        self.unreachable = tuple(unreachable)
