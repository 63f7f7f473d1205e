"""Exception types shared across the toolkit."""


class MlcvError(Exception):
    """Base class for all toolkit errors."""


class EmptyDesignError(MlcvError, ValueError):
    """A design of experiments with zero points was requested or supplied."""


class DesignSizeError(MlcvError, ValueError):
    """A subset or design size is incompatible with its parent design."""


class ConfigError(MlcvError, ValueError):
    """Invalid configuration values or malformed configuration files."""


class LevelRangeError(MlcvError, IndexError):
    """A level index lies outside the simulator hierarchy."""


class SingularDesignError(MlcvError, ValueError):
    """Regression design matrix is rank deficient.

    Carries the estimated condition number of the design in ``condition``.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class SingularCovarianceError(MlcvError, ValueError):
    """Control covariance matrix is numerically singular.

    ``dropped`` lists the indices of the redundant controls (the offending
    combination found by the pivoted factorization).
    """

    def __init__(self, message, dropped=()):
        super().__init__(message)
        self.dropped = tuple(dropped)


class ZeroVarianceError(MlcvError, ValueError):
    """An entity with zero empirical variance was used where variance must be positive."""


class NonFiniteDerivativeError(MlcvError, ValueError):
    """A derivative estimate evaluated to a non-finite value."""


class InsufficientQuadratureError(MlcvError, ValueError):
    """Quadrature order too low for exact integration of the requested products."""


class MissingTensorEntryError(MlcvError, KeyError):
    """A requested product-tensor entry is outside the tensor's covered index set."""


class InsufficientSamplesError(MlcvError, ValueError):
    """Fewer samples than the estimator requires."""


class BudgetError(MlcvError, ValueError):
    """Computational budget too small for the requested run."""
