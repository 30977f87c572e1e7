"""Exception types shared across the package."""


class PanelMidasError(Exception):
    """Base class for errors raised by this package."""


class SchemaError(PanelMidasError):
    """Malformed user input: CSV panels, config files, option values."""


class ConvergenceError(PanelMidasError):
    """Iterative solver failed to reach the requested tolerances."""


class NearSingularDesignError(PanelMidasError):
    """A nodewise regression left numerically zero residual variance."""


class SingularCovarianceError(PanelMidasError):
    """A long-run covariance matrix is too ill-conditioned to invert."""
