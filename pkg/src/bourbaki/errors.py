"""Exception types shared across the package."""


class BourbakiError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(BourbakiError, ValueError):
    def __init__(self, left, right, what="chart dimension"):
        self.left = left
        self.right = right
        super().__init__(f"{what} mismatch: {left} != {right}")


class IndexOutOfRange(BourbakiError, IndexError):
    pass


class BundleMismatch(BourbakiError, ValueError):
    pass


class ShapeMismatch(BourbakiError, ValueError):
    pass


class HypothesisViolation(BourbakiError):
    """A construction's hypothesis does not hold for the supplied data."""


class NotInImage(BourbakiError):
    """A residual that should factor through chi does not lie in its image."""


class Refused(BourbakiError):
    """A construction refused its input because a prerequisite check failed."""


class PolySyntaxError(BourbakiError, ValueError):
    def __init__(self, message, text="", pos=0):
        self.text = text
        self.pos = pos
        super().__init__(f"{message} at column {pos + 1}")
