# region -----Input Errors-----
class InvalidArgumentError(ValueError):
    pass


class CoverageError(InvalidArgumentError):
    """Target policy puts mass on an action the behavior policy never takes."""

    def __init__(self, state: int, action: int):
        self.state = state
        self.action = action
        super().__init__(
            f"Coverage violated at state {state}, action {action}: "
            f"target > 0 but behavior = 0"
        )
# endregion


# region -----Model Errors-----
class ErgodicityError(ValueError):
    """Chain has no unique stationary distribution."""


class RankDeficiencyError(ValueError):
    pass


class PositiveDefinitenessError(ValueError):
    def __init__(self, mu: float):
        self.mu = mu
        super().__init__(
            f"Key matrix is not positive definite: smallest eigenvalue of its symmetric part is {mu:.6g}"
        )
# endregion


# region -----Numerical Errors-----
class NumericalError(ArithmeticError):
    def __init__(self, message: str, condition: float = None):
        self.condition = condition
        super().__init__(message)
# endregion


# region -----Experiment Errors-----
class DivergenceError(RuntimeError):
    """Every trial of a run diverged; partial output is still written."""
# endregion
