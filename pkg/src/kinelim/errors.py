class KinelimError(Exception):
    pass


class ConfigError(KinelimError, ValueError):
    """Invalid run or grid parameters."""


class UnsupportedOperation(KinelimError):
    pass


class ResourceError(KinelimError):
    pass


class SolverError(KinelimError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class IllPosedInput(KinelimError, ValueError):
    pass


class StepRejected(KinelimError):
    """A time step violated a stability limit; ``advisory_dt`` is safe."""

    def __init__(self, message, advisory_dt):
        super().__init__(message)
        self.advisory_dt = advisory_dt


class NonContraction(KinelimError):
    def __init__(self, message, energy0):
        super().__init__(message)
        self.energy0 = energy0


class UsageError(KinelimError, ValueError):
    pass
