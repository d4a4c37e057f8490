'''
Every error a user can trigger derives from KgedError. The CLI maps the three
families (configuration, data, backend) onto distinct exit codes.
'''

class KgedError(Exception):
    pass

class ConfigError(KgedError):
    pass

class DataError(KgedError):
    pass

class SnapshotError(DataError):
    def __init__(self, message, line_number = None, record = None) -> None:
        self.line_number = line_number
        self.record = record
        if line_number is not None:
            message = "line {}: {} (record: {!r})".format(line_number, message, record)
        super().__init__(message)

class DatasetError(DataError):
    def __init__(self, message, line_number = None) -> None:
        self.line_number = line_number
        if line_number is not None:
            message = "line {}: {}".format(line_number, message)
        super().__init__(message)

class GraphError(KgedError):
    pass

class BackendError(KgedError):
    pass

class CredentialError(BackendError):
    pass

class MalformedResponseError(BackendError):
    pass

class RetriesExhaustedError(BackendError):
    def __init__(self, message, attempts) -> None:
        self.attempts = attempts
        super().__init__(message)

class ScriptError(BackendError):
    def __init__(self, mention_id, ordinal) -> None:
        self.mention_id = mention_id
        self.ordinal = ordinal
        super().__init__("mock script has no answer for mention {!r} at ordinal {}".format(mention_id, ordinal))

class DisambiguationError(KgedError):
    # carries the partial trace of the mention that failed
    def __init__(self, message, trace, cause = None) -> None:
        self.trace = trace
        self.cause = cause
        super().__init__(message)

class UnknownNodeError(KgedError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""

class TransientError(BackendError):
    # timeouts, connection resets, 429 and 5xx; the only failures that are retried
    pass
