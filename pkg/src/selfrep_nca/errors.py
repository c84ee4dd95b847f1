"""Exception types raised by the engine."""


class InvalidArgument(ValueError):
    """A caller supplied an argument outside an operation's domain."""


class InvalidState(RuntimeError):
    """An operation was invoked on an object that lacks required state."""


class TrainingDiverged(FloatingPointError):
    """A non-finite loss or gradient appeared during training."""

    def __init__(self, step: int, what: str = "gradient"):
        super().__init__(f"non-finite {what} at training step {step}")
        self.step = step


class CheckpointFormatError(ValueError):
    """A checkpoint file is corrupt, truncated, or of an unknown version."""
