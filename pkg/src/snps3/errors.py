"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class Snps3Error(Exception):
    exit_code = 1
    kind = "error"


class ConfigurationError(Snps3Error, ValueError):
    exit_code = 3
    kind = "configuration"


class FormatError(Snps3Error, ValueError):
    exit_code = 3
    kind = "format"


class ConsistencyError(Snps3Error, ValueError):
    """Raised when artifacts were built against different vocabularies."""

    exit_code = 4
    kind = "consistency"


class EmptyMaskError(Snps3Error, ValueError):
    """The masked set is empty; callers drop the corresponding loss term."""

    kind = "empty_mask"


class NoSignificantTokens(Snps3Error, LookupError):
    """A caption has no significant tokens; callers fall back to the sentence-level path."""

    kind = "no_significant_tokens"


class GradCheckError(Snps3Error, ArithmeticError):
    kind = "grad_check"

    def __init__(self, name, index, message="non-finite value during finite differencing"):
        super().__init__(f"{message} at {name}{list(index)}")
        self.name = name
        self.index = tuple(index)


class DivergenceError(Snps3Error, ArithmeticError):
    kind = "divergence"

    def __init__(self, step):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step
