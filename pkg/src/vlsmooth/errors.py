"""Exception types shared across the package."""


class ShapeError(ValueError):
    pass


class InvalidInputError(ValueError):
    pass


class UnsupportedMethodError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


class FormatError(ValueError):
    """Malformed binary or text input; `offset` is the byte position when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(ValueError):
    """Invalid experiment configuration; `pointer` is a JSON pointer to the bad field."""

    def __init__(self, pointer, message):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
