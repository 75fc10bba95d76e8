"""Exception hierarchy for floquet_lindblad."""

from __future__ import annotations


class FloquetLindbladError(Exception):
    """Base class for all library errors."""


class DimensionError(FloquetLindbladError, ValueError):
    """Array shapes are inconsistent with the declared Hilbert-space dimension."""


class StateValidationError(FloquetLindbladError, ValueError):
    """Input is not a valid density matrix or Hermitian observable."""


class SingularMonodromyError(FloquetLindbladError, ArithmeticError):
    """The matrix handed to the logarithm is (numerically) singular."""

    def __init__(self, message: str = "singular monodromy", *, min_abs_eigenvalue: float | None = None):
        super().__init__(message)
        self.min_abs_eigenvalue = min_abs_eigenvalue


class BranchCutError(FloquetLindbladError, ArithmeticError):
    """An eigenvalue lies on the negative real axis, so the principal log is ambiguous."""

    def __init__(self, eigenvalue: complex, message: str | None = None, *, t0: float | None = None):
        self.eigenvalue = complex(eigenvalue)
        self.t0 = t0
        if message is None:
            message = f"log branch ambiguity: eigenvalue {self.eigenvalue!r} on the negative real axis"
        if t0 is not None:
            message += f" (anchor t0={t0!r}; another anchor may move the spectrum off the cut)"
        super().__init__(message)


class ConvergenceError(FloquetLindbladError, RuntimeError):
    """An adaptive refinement hit its ceiling before meeting the tolerance."""

    def __init__(self, message: str, *, difference: float, steps: int):
        super().__init__(f"{message} (last difference {difference:.3e} at {steps} steps)")
        self.difference = difference
        self.steps = steps


class IntegrationAccuracyError(FloquetLindbladError, RuntimeError):
    """Trace drift along a trajectory exceeded its tolerance."""


class TruncationError(FloquetLindbladError, RuntimeError):
    """A Fourier truncation cannot represent the sampled function."""

    def __init__(self, residual: float, message: str = "insufficient truncation"):
        super().__init__(f"{message}: reconstruction residual {residual:.3e}")
        self.residual = residual


class GaugeAmbiguityError(FloquetLindbladError, RuntimeError):
    """The harmonic-balance system for the micromotion is rank deficient."""


class DegenerateSteadyStateError(FloquetLindbladError, RuntimeError):
    """The block steady-state system has more than one null direction."""

    def __init__(self, singular_values, message: str = "degenerate steady space"):
        self.singular_values = tuple(float(s) for s in singular_values)
        super().__init__(f"{message}: smallest singular values {self.singular_values}")


class IllConditionedPropagatorError(FloquetLindbladError, ArithmeticError):
    """The forward propagator is too ill conditioned to invert."""

    def __init__(self, condition_number: float):
        super().__init__(f"non-invertible dissipative propagator (cond={condition_number:.3e})")
        self.condition_number = condition_number


class GeometryInconsistencyError(FloquetLindbladError, RuntimeError):
    """Closed-form geometry coefficients disagree with their defining integrals."""


class ConfigError(FloquetLindbladError, ValueError):
    """Scenario configuration could not be parsed or validated."""
