"""Exception types raised across the package."""


class SecureGameError(Exception):
    pass


class DimensionMismatch(SecureGameError, ValueError):
    pass


class NonConvergent(SecureGameError, RuntimeError):
    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class SingularMatrix(SecureGameError, ArithmeticError):
    pass


class SingularCovariance(SingularMatrix):
    pass


class InsufficientHistory(SecureGameError, IndexError):
    pass


class NumericalFailure(SecureGameError, RuntimeError):
    pass


class BudgetExceeded(SecureGameError, RuntimeError):
    def __init__(self, count, budget):
        super().__init__(f"pure-history enumeration needs {count} histories, budget is {budget}")
        self.count = count
        self.budget = budget


class ScenarioError(SecureGameError, ValueError):
    pass


class ParseError(ScenarioError):
    def __init__(self, message, line=None, field=None):
        super().__init__(message)
        self.line = line
        self.field = field


class ValidationError(ScenarioError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid scenario: " + "; ".join(self.problems))
