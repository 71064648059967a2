"""Exception hierarchy shared by the library and the command-line driver."""


class JostkitError(Exception):
    """Base class for all errors raised by jostkit."""


class CatalogError(JostkitError, ValueError):
    """Unknown catalog potential or parameters giving a non-integrable potential."""


class QuadratureError(JostkitError):
    """Adaptive quadrature did not reach the requested tolerance."""


class ConvergenceError(JostkitError):
    """An iterative solver (Volterra, power iteration, refinement) did not converge."""


class SolverError(JostkitError):
    """A solve produced degenerate data, e.g. a vanishing Wronskian."""


class SpecError(JostkitError, ValueError):
    """Invalid sweep or audit config or parameters outside the theorem regime."""
