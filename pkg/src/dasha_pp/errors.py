"""Exception hierarchy shared by all dasha_pp modules."""


class DashaError(Exception):
    pass


class DimensionMismatch(DashaError, ValueError):
    def __init__(self, expected, got):
        super().__init__(f"expected dimension {expected}, got {got}")
        self.expected = expected
        self.got = got


class InvalidParameter(DashaError, ValueError):
    pass


class EnumerationTooLarge(DashaError, ValueError):
    pass


class ParseError(DashaError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyInput(ParseError):
    def __init__(self):
        super().__init__("input contains no samples")


class InvalidHorizon(DashaError, ValueError):
    pass


class DivergenceError(DashaError, ArithmeticError):
    def __init__(self, round_index, what):
        super().__init__(f"non-finite value in {what} at round {round_index}")
        self.round_index = round_index
        self.what = what


class ConfigError(DashaError, ValueError):
    pass


class AllRunsDiverged(DashaError, RuntimeError):
    pass
