"""Exception hierarchy shared by every module."""


class McqaError(Exception):
    """Base class for all engine errors."""


class DimensionError(McqaError, ValueError):
    pass


class DomainError(McqaError, ValueError):
    pass


class ConfigError(McqaError, ValueError):
    pass


class ContractError(McqaError, RuntimeError):
    pass


class DataError(McqaError):
    """Raised for problems with input files rather than with code or config."""


class ParseError(DataError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class ValidationError(ParseError):
    pass


class NumericError(McqaError, ArithmeticError):
    """Non-finite loss or parameter encountered during training."""
