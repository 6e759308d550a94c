"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A configuration value or an input shape is invalid."""


class StaleIndexError(LookupError):
    """A store slot was overwritten after the caller obtained its index."""


class WarmupIncomplete(RuntimeError):
    """The replay buffer holds fewer transitions than a minibatch needs."""


class TrainingDiverged(FloatingPointError):
    """A loss or gradient became non-finite during training."""
