"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
2 for invalid input, 3 when no feasible attack exists, 4 for numerical
failures.
"""


class DiaError(Exception):
    exit_code = 4


# -- input validation (exit 2) ------------------------------------------------

class ValidationError(DiaError, ValueError):
    exit_code = 2


class DimensionMismatch(ValidationError):
    pass


class InvalidParameter(ValidationError):
    pass


class NonPsdInput(ValidationError):
    pass


class NonPhysicalState(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None, field=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.field = field


class DegenerateAttack(ValidationError):
    """The requested attack leaves the measurement law unchanged."""


class TooManySubsets(ValidationError):
    pass


# -- infeasibility (exit 3) ---------------------------------------------------

class Infeasible(DiaError):
    exit_code = 3


class InfeasibleLambda(Infeasible):
    pass


class NoFeasibleMeasurement(Infeasible):
    pass


class InfeasibleLambdaAtStep(Infeasible):
    """No remaining measurement admits a positive optimal variance.

    ``failures`` maps each candidate index to the tuple of violated
    inequality numbers (1, 2 and/or 3).
    """

    def __init__(self, step, failures):
        self.step = step
        self.failures = dict(failures)
        detail = ", ".join(
            f"j={j}: {list(bad)}" for j, bad in sorted(self.failures.items())
        )
        super().__init__(f"no feasible measurement at step {step} ({detail})")


# -- numerical failures (exit 4) ----------------------------------------------

class NumericalError(DiaError):
    exit_code = 4


class UnstableDynamics(NumericalError):
    pass


class SingularOperator(NumericalError):
    pass


class SingularCovariance(NumericalError):
    pass


class SingularReference(SingularCovariance):
    pass


class SingularShift(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class NotStabilizable(NumericalError):
    pass


class NotDetectable(NumericalError):
    pass


class NewtonDiverged(NumericalError):
    pass


class NotAnEquilibrium(NumericalError):
    pass
