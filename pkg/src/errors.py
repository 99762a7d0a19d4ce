"""Exception types shared across the solver."""

from typing import Optional, Sequence

import numpy as np


class ScatterError(Exception):
    """Base class for all solver errors."""


class ConfigError(ScatterError, ValueError):
    """Invalid configuration or geometry parameters.

    Attributes:
        field: Dotted path of the offending config entry (e.g. ``cell.R_proxy``).
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class DomainError(ScatterError, ValueError):
    """Kernel evaluated outside its domain (coincident points, x <= 0, ...)."""


class NumericalError(ScatterError, RuntimeError):
    """A factorization or solve failed numerically.

    Attributes:
        condition: Condition-number estimate of the failing matrix, if known.
        singular_values: Trailing singular values of the failing matrix, if known.
        residual: Achieved relative residual, if known.
        kappa: Bloch wavenumber of the failing quasiperiodic solve, if known.
        index: Quadrature-node index of the failing solve, if known.
    """

    def __init__(
        self,
        message: str,
        *,
        condition: Optional[float] = None,
        singular_values: Optional[Sequence[float]] = None,
        residual: Optional[float] = None,
        kappa: Optional[complex] = None,
        index: Optional[int] = None,
    ):
        self.condition = condition
        self.singular_values = (
            None if singular_values is None else np.asarray(singular_values)
        )
        self.residual = residual
        self.kappa = kappa
        self.index = index
        super().__init__(message)
