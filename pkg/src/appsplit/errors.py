"""Exception hierarchy shared by every appsplit module."""


class AppSplitError(Exception):
    pass


class MalformedArchive(AppSplitError):
    """The bytes are not a structurally valid package or bundle archive."""


class SchemaViolation(AppSplitError):
    """A decoded package breaks a model invariant.

    ``entity`` names the offending class, method, resource, asset or payload.
    """

    def __init__(self, entity, message):
        super().__init__(f"{entity}: {message}")
        self.entity = entity


class UnknownActivity(AppSplitError):
    pass


class UnknownClass(AppSplitError):
    pass


class InvalidSelection(AppSplitError):
    pass


class ActivityInBase(AppSplitError):
    pass


class InvalidScript(AppSplitError):
    pass


class MalformedScript(AppSplitError):
    def __init__(self, line_no, message):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class NonTermination(AppSplitError):
    pass


class StoreUnavailable(AppSplitError):
    pass


class AlreadyInstalled(AppSplitError):
    pass


class NotInstalled(AppSplitError):
    pass


class StubPoolExhausted(AppSplitError):
    pass


class NoMatchingActivity(AppSplitError):
    pass


class ActivityNotFound(AppSplitError):
    """An unhooked explicit launch targeted an activity that is not on the device."""


class MergeConflict(AppSplitError):
    pass


class LoadConflict(AppSplitError):
    pass


class NoVisits(AppSplitError):
    pass


class InvalidParams(AppSplitError):
    pass
