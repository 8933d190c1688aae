"""Exceptions shared by the harness, targets and the runtime."""


class TargetCrash(Exception):
    """Raised by a target at a seeded bug site."""

    def __init__(self, bug_id: int, detail: str = ""):
        if bug_id < 1:
            raise ValueError("bug ids start at 1")
        super().__init__(bug_id, detail)
        self.bug_id = bug_id
        self.detail = detail


class TargetTimeout(Exception):
    """Raised from the trace sink once the wall-clock budget is spent."""


class InputTooLarge(ValueError):
    """Input is wider than the surrogate; the model has to be rebuilt."""


class ChannelClosed(ConnectionError):
    """The peer end of a message channel went away."""


class ConfigError(ValueError):
    pass
