"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid argument: bad shapes, layouts, or malformed configuration."""


class ParseError(InputError):
    """Malformed external data (timestamps, CSV rows, config files)."""


class NumericalError(ArithmeticError):
    """A factorization failed even after jitter escalation."""

    def __init__(self, message, *, size=None, jitter=None, diag_range=None):
        parts = [message]
        if size is not None:
            parts.append(f"size={size}")
        if jitter is not None:
            parts.append(f"last_jitter={jitter:.3e}")
        if diag_range is not None:
            parts.append(f"diag=[{diag_range[0]:.3e}, {diag_range[1]:.3e}]")
        super().__init__("; ".join(parts))
        self.size = size
        self.jitter = jitter
        self.diag_range = diag_range


class StateError(RuntimeError):
    """Operation requested on a state that cannot support it yet."""


class StreamError(RuntimeError):
    """A streaming run failed part-way; ``outcomes`` holds the completed steps."""

    def __init__(self, message, outcomes, cause=None):
        super().__init__(message)
        self.outcomes = outcomes
        self.cause = cause
