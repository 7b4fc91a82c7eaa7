class DsmError(Exception):
    pass


class ProtocolViolation(DsmError):
    """A replica or client saw a message its protocol forbids."""


class MarkerAuditError(ProtocolViolation):
    """A causal+ marker was delivered before writes the initiator had applied."""


class ScenarioError(DsmError):
    def __init__(self, message: str, field: str = None, line: int = None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


class ScenarioParseError(ScenarioError):
    pass


class ScenarioValidationError(ScenarioError):
    pass


class CheckpointFormatError(DsmError):
    pass
