"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration (bad dimensions, probabilities, schedules...)."""


class StateError(RuntimeError):
    """Operation applied to a state that cannot accept it (e.g. stepping a finished episode)."""


class ContractError(ValueError):
    """Caller broke an interface contract (shape/length mismatch, foreign data)."""


class NumericsError(ArithmeticError):
    """A numerical computation produced non-finite intermediates."""


class CheckpointError(RuntimeError):
    """Checkpoint file is corrupt, has the wrong version, or does not match the run."""
