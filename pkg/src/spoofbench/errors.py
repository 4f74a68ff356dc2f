"""Exception hierarchy shared by every spoofbench module."""


class SpoofbenchError(Exception):
    """Base class for all errors raised by spoofbench."""


class InvalidInputError(SpoofbenchError, ValueError):
    pass


class UnsupportedFormatError(SpoofbenchError, ValueError):
    pass


class ConfigError(SpoofbenchError, ValueError):
    pass


class AdapterError(SpoofbenchError, ValueError):
    """Unknown frontend adapter or a checkpoint that does not fit it."""


class ShapeError(SpoofbenchError, RuntimeError):
    """An internal tensor shape invariant was violated."""


class NumericDomainError(SpoofbenchError, ArithmeticError):
    """Zero-norm vectors reached an angle or cosine computation."""


class ContractError(SpoofbenchError, RuntimeError):
    pass


class ProtocolParseError(SpoofbenchError, ValueError):
    def __init__(self, message, lineno=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.lineno = lineno
        self.path = path
