class UniWalkError(Exception):
    """Base class for package errors."""


class ParseError(UniWalkError, ValueError):
    def __init__(self, message: str, lineno: int, line: str):
        self.lineno = lineno
        self.line = line
        where = f"line {lineno}: " if lineno else ""
        super().__init__(f"{where}{message}")


class DuplicateRatingError(ParseError):
    pass


class DivergenceError(UniWalkError, ArithmeticError):
    """Training produced a non-finite parameter."""

    def __init__(self, message: str, pair_index: int = -1, iteration: int = -1):
        self.pair_index = pair_index
        self.iteration = iteration
        super().__init__(message)


class ModelFormatError(UniWalkError):
    """Model file is corrupt, truncated or of an unsupported version."""


class UnknownEntityError(UniWalkError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown entity"
