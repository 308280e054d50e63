"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures without a
lookup table: 2 for bad input or configuration, 1 for runtime failures.
"""


class PourkitError(Exception):
    exit_code = 1


class InputError(PourkitError):
    """Invalid user-supplied data (files, arguments, configuration)."""

    exit_code = 2


class MeshError(InputError):
    pass


class NonWatertightMesh(MeshError):
    pass


class DegenerateTriangle(MeshError):
    pass


class MeshLoadError(MeshError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class VolumeOutOfRange(InputError):
    pass


class PixelOutOfBounds(InputError):
    pass


class AngleOutOfRange(InputError):
    pass


class NonPositiveDt(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class CacheMismatch(InputError):
    pass


class EmptyTrainingSet(InputError):
    pass


class InsufficientData(InputError):
    pass


class ConfigError(InputError):
    pass


class DegenerateBelief(PourkitError):
    """All posterior mass underflowed; the observation contradicts the prior."""


class IoError(PourkitError):
    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path is not None else message)
