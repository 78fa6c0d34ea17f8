"""Exception types shared across the simulation stack.

Every failure that user input can trigger maps onto one of these classes so
the command line layer can distinguish "bad scene" from "solver blew up"
without string matching.
"""


class PorosimError(Exception):
    """Base class for all errors raised by this package."""


class MeshError(PorosimError):
    """Malformed mesh data: bad indices, degenerate cells, broken manifold."""


class MaterialError(PorosimError):
    """Invalid elastic parameters or an ill-conditioned tensor operation."""


class SceneError(PorosimError):
    """Scene or script file failed validation.

    ``field`` names the offending entry as a dotted path into the JSON
    document, e.g. ``"material.porosity"``.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class StabilityError(PorosimError):
    """A requested step size violates an explicit stability bound."""


class SolverError(PorosimError):
    """Iterative solve failed to reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
