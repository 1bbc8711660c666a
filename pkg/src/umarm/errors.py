"""Exception types raised by the umarm package."""


class UMArmError(Exception):
    """Base class for all package errors."""


class InvalidTwistError(UMArmError, ValueError):
    """Twist angular part is neither unit-norm nor zero."""


class InvalidPoseError(UMArmError, ValueError):
    """Rotation block is not a proper rotation."""


class ExtractionError(UMArmError):
    """Relative rotation cannot be produced by the two-axis U-joint.

    The residual (Frobenius norm of the rotation mismatch) is kept on the
    exception so callers can decide whether the measurement is just noisy.
    """

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class InputError(UMArmError, ValueError):
    """Argument outside the domain of an operation."""


class RangeError(InputError):
    """Actuator length outside the modelled contraction range."""


class ConfigError(UMArmError):
    """Malformed or incomplete configuration file."""


class SimulationFault(UMArmError):
    """Plant state became non-finite."""


class ExperimentError(UMArmError):
    """An experiment could not be carried out (e.g. unreachable waypoint)."""
