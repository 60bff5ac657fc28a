"""Exception hierarchy. Each family maps to a CLI exit code."""


class MassGraspError(Exception):
    exit_code = 5


class ConfigError(MassGraspError, ValueError):
    exit_code = 2


class DataError(MassGraspError):
    exit_code = 3


class DatasetFormatError(DataError, ValueError):
    pass


class CorruptHeaderError(DatasetFormatError):
    pass


class ChannelMismatchError(DatasetFormatError):
    pass


class TruncatedPayloadError(DatasetFormatError):
    pass


class ModelError(MassGraspError):
    exit_code = 4


class ShapeError(ModelError, ValueError):
    pass


class DivergenceError(ModelError, FloatingPointError):
    pass


class ModelFormatError(ModelError, ValueError):
    pass


class SimulationError(MassGraspError):
    exit_code = 5


class OutOfBoundsError(SimulationError, IndexError):
    pass


class EmptySurfaceError(SimulationError):
    pass


class CapacityError(SimulationError, ValueError):
    pass


class GridFitError(SimulationError, ValueError):
    pass
