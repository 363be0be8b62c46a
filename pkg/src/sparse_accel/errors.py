"""Exception hierarchy shared by all modules."""


class SparseAccelError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SparseAccelError, ValueError):
    pass


class ModeWindowMismatch(ConfigError):
    """A borrowing window is non-zero in a mode that forbids it."""


class DegenerateCore(ConfigError):
    pass


class InvalidWindow(ConfigError):
    """Negative distance, or lane/neighbour borrowing without a time step."""


class MorphExceedsHardware(ConfigError):
    pass


class UnknownPreset(ConfigError, KeyError):
    pass


class UnknownConfigKey(ConfigError):
    pass


class K0NotDivisibleBy4(ConfigError):
    pass


class CorruptMetadata(SparseAccelError, ValueError):
    pass


class TruncatedStream(SparseAccelError, ValueError):
    pass


class MissingCompressedB(SparseAccelError, ValueError):
    pass


class ConfigTensorMismatch(SparseAccelError, ValueError):
    pass


class TooLargeForOracle(SparseAccelError, ValueError):
    pass


class UnderdeterminedFit(SparseAccelError, ValueError):
    pass


class EmptySpaceAfterConstraints(SparseAccelError, ValueError):
    pass


class TensorFormatError(SparseAccelError, ValueError):
    pass
