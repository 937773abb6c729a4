"""Exception hierarchy shared by every component.

Each error carries a machine-parsable category that the command line prints
as `error: <category>: <message>`.
"""


class TuningError(Exception):
    category = "internal"
    exit_code = 1

    def __init__(self, message):
        super().__init__(message)
        self.message = message


class InvalidInputError(TuningError):
    """Invalid config value, argument or artifact content"""
    category = "invalid-input"
    exit_code = 2


class SearchSpaceError(InvalidInputError):
    """Invalid knob domain or a point outside its space"""


class SchemaMismatchError(TuningError):
    """Artifacts built against different search spaces"""
    category = "schema-mismatch"
    exit_code = 3


class MissingArtifactError(TuningError):
    category = "missing-artifact"
    exit_code = 4


class NumericalError(TuningError):
    """Non-finite loss, activation or gradient"""
    category = "numerical"
    exit_code = 5


class ArtifactIOError(TuningError):
    category = "io"
    exit_code = 6
