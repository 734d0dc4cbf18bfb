"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: DataError -> 2, BackendError -> 3.
Plain ValueError from bad arguments maps to usage (1).
"""


class PersonakitError(Exception):
    pass


class DataError(PersonakitError):
    """Malformed input data: schema violations, unknown relations, bad files."""


class UnknownRelationError(DataError):
    def __init__(self, name: str):
        super().__init__(f"unknown fine-grained relation name: {name!r}")
        self.name = name


class BackendError(PersonakitError):
    """A scorer backend failed mid-operation."""


class BackendUnavailableError(BackendError):
    """Remote backend unreachable after retries."""


class ProtocolError(BackendError):
    """Remote backend replied with a malformed or invalid payload."""


class MissingEntryError(BackendError):
    """Table backend has no entry for the requested key and no fallback."""


class UndefinedAgreementError(PersonakitError):
    """Agreement requested on data with no multiply-annotated items."""
