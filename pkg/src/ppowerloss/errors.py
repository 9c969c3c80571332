"""Exception hierarchy shared by the library and the command line."""


class ModelError(ValueError):
    """Invalid model specification or out-of-domain evaluation request."""


class ConfigError(ValueError):
    """Malformed run configuration (CLI exit code 2)."""


class QuadratureError(ArithmeticError):
    """Non-finite integrand or refinement budget exhausted (CLI exit code 3)."""


class InvariantViolation(RuntimeError):
    """A mathematical invariant failed, pointing at a bug (CLI exit code 4)."""
