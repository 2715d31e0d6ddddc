"""Exception hierarchy shared by every module."""


class ASLError(Exception):
    pass


class ShapeError(ASLError, ValueError):
    pass


class DomainError(ASLError, ValueError):
    pass


class EmptyInputError(ASLError, ValueError):
    pass


class DegenerateDesignError(ASLError, ValueError):
    """Least-squares design matrix is singular (e.g. all inputs identical)."""


class NearSingularError(ASLError, ValueError):
    """An inverted linear estimator has a slope too close to zero."""


class PoisonedParametersError(ASLError, FloatingPointError):
    pass


class AbortUpdate(ASLError, FloatingPointError):
    """A gradient step produced non-finite values; parameters were left untouched."""


class ConfigError(ASLError, ValueError):
    pass
