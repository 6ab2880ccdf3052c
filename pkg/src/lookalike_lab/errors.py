"""Exception types shared across the library.

Every error raised by lookalike_lab derives from :class:`LookalikeLabError`,
so callers can catch one base class at pipeline boundaries.
"""


class LookalikeLabError(Exception):
    """Base class for all lookalike_lab errors."""


# --- dataset ingestion ---

class ParseError(LookalikeLabError):
    """A CSV/config file violates the documented grammar (carries line number)."""

    def __init__(self, path, line, reason):
        self.path = str(path)
        self.line = line
        self.reason = reason
        super().__init__(f"{self.path}:{line}: {reason}")


class ValidationError(LookalikeLabError):
    """A structurally well-formed input violates a dataset invariant."""


class FormatError(LookalikeLabError):
    """Binary file has a bad magic/version/dtype field."""


class TruncationError(LookalikeLabError):
    """Binary file ends before the declared record count."""


class NonFiniteError(LookalikeLabError):
    """An embedding vector contains NaN or Inf (record index reported)."""


class UnknownSubject(LookalikeLabError):
    """A subject id does not exist in the identity graph."""


class JoinError(LookalikeLabError):
    """An image in an embedding store cannot be resolved to a subject."""


# --- pairing / training ---

class InsufficientCandidates(LookalikeLabError):
    """Fewer unrelated candidate subjects exist than the requested k."""


class EmptyTrainingSet(LookalikeLabError):
    """No usable twin pairs to build a training set from."""


class DegeneratePool(LookalikeLabError):
    """Balanced sampling needs at least one positive and one negative pair."""


class DimensionMismatch(LookalikeLabError):
    """Vector length does not match the expected dimension."""


class DivergenceError(LookalikeLabError):
    """Training loss became non-finite."""


# --- scoring ---

class ZeroVector(LookalikeLabError):
    """Cosine-based scores are undefined for a zero vector."""


class EmptyInput(LookalikeLabError):
    """An operation requiring a non-empty collection received an empty one."""


# --- match engine ---

class IncompatibleAccumulators(LookalikeLabError):
    """Accumulators with different bin edges or retain thresholds cannot merge."""


# --- analysis ---

class NoTwinPairs(LookalikeLabError):
    """No identical-twin non-mated pairs available to average."""


class EmptyClass(LookalikeLabError):
    """ROC needs at least one genuine and one impostor score."""


class DegenerateVariance(LookalikeLabError):
    """A correlation/normalization input has zero variance."""


class TooFewSamples(LookalikeLabError):
    """Not enough values to compute the requested statistic."""


# --- synthesis / configuration ---

class ConfigError(LookalikeLabError):
    """A configuration value violates its invariants."""
