class ValidationError(ValueError):
    """Input violates an operation's preconditions."""


class BudgetExceededError(RuntimeError):
    """A construction would exceed the configured atom or memory budget."""
