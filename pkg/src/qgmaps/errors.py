"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` used by the command-line front end.
"""


class QGMapsError(Exception):
    exit_code = 1
    kind = "error"

    def to_dict(self):
        return {"error": self.kind, "message": str(self)}


class ConfigError(QGMapsError, ValueError):
    exit_code = 2
    kind = "config"


class DomainError(QGMapsError, ValueError):
    exit_code = 2
    kind = "domain"


class MapError(QGMapsError, ValueError):
    exit_code = 2
    kind = "map"


class ContractError(QGMapsError, ValueError):
    exit_code = 2
    kind = "contract"


class PartitionError(QGMapsError):
    exit_code = 3
    kind = "partition"


class NumericalFailure(QGMapsError, ArithmeticError):
    exit_code = 3
    kind = "numerical"

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual

    def to_dict(self):
        d = super().to_dict()
        if self.residual is not None:
            d["residual"] = float(self.residual)
        return d


class UnistochasticityError(NumericalFailure):
    kind = "unistochastic"


class PrecisionError(NumericalFailure):
    kind = "precision"


class TrackingError(NumericalFailure):
    kind = "tracking"

    def __init__(self, message, window=None):
        super().__init__(message)
        self.window = window

    def to_dict(self):
        d = super().to_dict()
        if self.window is not None:
            d["window"] = [float(w) for w in self.window]
        return d


class ResourceBudgetError(QGMapsError):
    exit_code = 4
    kind = "resource"
