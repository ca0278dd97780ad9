"""Exception hierarchy shared by every stage of the pipeline."""


class KaratuneError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(KaratuneError, ValueError):
    """Input data violates an operation's precondition."""


class ConfigError(KaratuneError, ValueError):
    """A configuration value is out of range or inconsistent."""


class FormatError(KaratuneError, ValueError):
    """A file uses an unsupported container or codec."""


class ContractError(KaratuneError, ValueError):
    """Tensor shapes or call sequencing do not satisfy an interface contract."""


class DomainError(KaratuneError, ValueError):
    """A numeric argument is outside the function's mathematical domain."""


class InfeasibleError(KaratuneError, ValueError):
    """No path or assignment has non-zero probability."""


class NonFiniteError(KaratuneError, FloatingPointError):
    """A NaN or Inf appeared in a forward value or a gradient."""
