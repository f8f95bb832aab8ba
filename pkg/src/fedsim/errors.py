"""Exception hierarchy shared by every fedsim module."""


class FedsimError(Exception):
    """Base class; carries the CLI exit code for its error class."""

    exit_code = 1


class ConfigError(FedsimError):
    exit_code = 2

    def __init__(self, message, errors=None):
        super().__init__(message)
        # list of (key path, reason)
        self.errors = list(errors or [])


class LayoutError(FedsimError, ValueError):
    pass


class NumericalError(FedsimError, ArithmeticError):
    pass


class DataError(FedsimError):
    exit_code = 3


class EmptyDataset(DataError):
    pass


class TooManyClients(DataError):
    pass


class EmptyClient(DataError):
    pass


class ClusteringDegenerate(DataError):
    pass


class NoUpdates(FedsimError):
    pass


class TransportError(FedsimError):
    exit_code = 4

    def __init__(self, message, round=None, client_id=None):
        super().__init__(message)
        self.round = round
        self.client_id = client_id


class ProtocolError(TransportError):
    pass


class FrameError(ProtocolError):
    pass


class SecureAbort(FedsimError):
    exit_code = 5

    def __init__(self, message, round=None, missing=()):
        super().__init__(message)
        self.round = round
        self.missing = tuple(missing)
