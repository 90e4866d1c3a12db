"""Exception hierarchy shared by every module of the package."""


class MVANetError(Exception):
    """Base class; the CLI maps these to a nonzero exit with the class name."""


class GeometryError(MVANetError, ValueError):
    pass


class ConfigError(MVANetError, ValueError):
    pass


class PartitionError(MVANetError, ValueError):
    pass


class SupervisionError(MVANetError, KeyError):
    def __str__(self):
        # KeyError quotes its argument; keep the plain message
        return str(self.args[0]) if self.args else ""


class MetricsError(MVANetError, ValueError):
    pass


class DataError(MVANetError, ValueError):
    pass


class CheckpointError(MVANetError, ValueError):
    pass


class TrainingError(MVANetError, RuntimeError):
    pass
