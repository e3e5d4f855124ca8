"""
Exception hierarchy for k2gof

Every exception carries the process exit code the command-line front end
maps it to. Library code raises; only ``k2gof.main`` converts to exit codes.

Exit codes:
    0  ok
    2  input error (malformed data, config, model file, model failure)
    3  convergence warning
    4  harness error (failed-replicate thresholds)
    5  audit or dimension failure
"""


class K2GofError(Exception):
    """Base class for all k2gof errors"""

    exit_code = 1


class InputError(K2GofError):
    """Malformed user input: CSV, JSON, config or model file"""

    exit_code = 2


class ModelError(K2GofError):
    """A model could not be evaluated, normalized or sampled"""

    exit_code = 2


class NonFiniteDensity(ModelError):
    """A log-density evaluation on the grid was NaN or infinite"""


class ZeroMass(ModelError):
    """The normalization constant underflowed"""


class RejectionStall(ModelError):
    """The rejection sampler's acceptance rate collapsed"""


class OutOfSupport(ModelError):
    """A point lies outside the model's support rectangle"""


class SupportMismatch(ModelError):
    """Two models that must share a support do not"""


class SingularInformation(ModelError):
    """The Fisher information matrix is (numerically) singular"""


class GridMismatch(ModelError):
    """Fields combined in one operation live on different grids"""


class DegenerateK(ModelError):
    """The K operator is numerically undefined but not the identity"""


class NoConvergence(K2GofError):
    """Maximum-likelihood fit did not converge within its budget"""

    exit_code = 3

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class HarnessError(K2GofError):
    """Too many replicates failed in a simulation"""

    exit_code = 4


class AuditError(K2GofError):
    """A rotation plan failed its invariant self-check"""

    exit_code = 5


class DimensionMismatch(AuditError):
    """Two models in a rotation have different parameter counts"""
