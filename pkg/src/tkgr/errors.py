"""Exception hierarchy. Each class carries a short ``category`` used by the CLI."""


class TKGRError(Exception):
    category = "error"


class ParseError(TKGRError):
    category = "parse"

    def __init__(self, message, line_no=None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


class VocabError(TKGRError):
    category = "vocab"


class SplitOrderError(TKGRError):
    category = "split-order"


class ContractViolation(TKGRError):
    category = "contract"


class IntegrityError(TKGRError):
    category = "integrity"


class ShapeMismatchError(TKGRError):
    category = "shape"


class ConfigError(TKGRError):
    category = "config"


class UsageError(TKGRError):
    category = "argument"


class FileError(TKGRError):
    category = "file"
