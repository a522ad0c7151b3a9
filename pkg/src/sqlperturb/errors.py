"""Exception hierarchy shared across the toolkit."""


class SqlPerturbError(Exception):
    """Base class for all toolkit errors."""


class SqlSyntaxError(SqlPerturbError):
    """Query text could not be tokenized or parsed."""

    def __init__(self, message, position=None, token=None):
        detail = message
        if token is not None:
            detail += f" (token {token!r}"
            if position is not None:
                detail += f" at {position}"
            detail += ")"
        super().__init__(detail)
        self.position = position
        self.token = token


class UnknownColumnError(SqlPerturbError):
    """A column or table reference does not resolve against the schema."""


class UnsupportedGrammarError(SqlPerturbError):
    """Construct outside the supported grammar subset; callers may skip the query."""


class RenameCollisionError(SqlPerturbError):
    """A rename would collide with an existing column name."""


class SchemaMismatchError(SqlPerturbError):
    """Schema file and database content disagree."""


class TransformError(SqlPerturbError):
    """A content transform is invalid against the schema or content."""


class ExecutionError(SqlPerturbError):
    """Query execution failed against the database."""


class DataError(SqlPerturbError):
    """Bad or inconsistent input data (corpus, lexicon, predictions)."""


class WorkerError(SqlPerturbError):
    """Model worker unreachable or returned a transport-level failure."""
