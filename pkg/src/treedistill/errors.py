class ContractError(ValueError):
    """A caller violated an operation's preconditions."""


class TrainingError(RuntimeError):
    """Teacher training diverged or otherwise failed."""


class FormatError(ValueError):
    """A file did not match its expected format.

    The message names the file and the offending line or layer.
    """
