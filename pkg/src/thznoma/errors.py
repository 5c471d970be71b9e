"""Exception types raised across the package."""

import numpy as np


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class SingularChannelError(np.linalg.LinAlgError):
    """A detector was handed a channel without full column rank."""


class NullingError(np.linalg.LinAlgError):
    """Exact zero-forcing nulling is impossible for the given user channels."""


class AllocationError(ValueError):
    """Not enough sub-bands to give every group its own."""


class SearchSpaceError(ValueError):
    """An exhaustive search was refused because its space is too large."""


class ConfigError(ValueError):
    """Configuration failed validation."""
