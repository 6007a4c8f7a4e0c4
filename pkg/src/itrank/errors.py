"""Exception hierarchy shared by all itrank modules."""


class ItrankError(Exception):
    """Base class for all errors raised by this package."""


class UnknownIdError(ItrankError, KeyError):
    """A task id was referenced that the table/manifest/embedding set lacks."""

    def __init__(self, task_id: str, context: str = ""):
        self.task_id = task_id
        msg = f"unknown task id {task_id!r}"
        if context:
            msg += f" ({context})"
        super().__init__(msg)

    def __str__(self) -> str:
        return self.args[0]


class SchemaError(ItrankError, ValueError):
    """Malformed input file or a value violating a type invariant."""


class StructureError(ItrankError, ValueError):
    """Structurally incompatible inputs (mismatched id sets, wrong dims)."""


class DomainError(ItrankError, ValueError):
    """Argument outside the valid domain of an operation."""


class UnsupportedConfigError(ItrankError, ValueError):
    """Operation not defined for this label kind / task type combination."""
