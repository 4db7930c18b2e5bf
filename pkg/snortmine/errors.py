EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PARSE = 3
EXIT_RUNTIME = 4


class SnortmineError(Exception):
    exit_code = EXIT_RUNTIME


class ConfigError(SnortmineError):
    exit_code = EXIT_CONFIG


class ParseError(SnortmineError):
    """
    Raised for malformed input files. Carries the 1-based line number when known.
    """

    exit_code = EXIT_PARSE

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownLabelError(ParseError):
    pass


class TrainingError(SnortmineError):
    pass


class CompileError(SnortmineError):
    pass
