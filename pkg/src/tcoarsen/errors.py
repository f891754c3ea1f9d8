class TCoarsenError(Exception):
    """Base class for every error raised by the toolkit."""


class ParseError(TCoarsenError):
    """Lexical or syntax error at a source position."""

    def __init__(self, message, line=0, col=0, filename=None):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col
        self.filename = filename

    def diagnostic(self, filename=None):
        """``file:line:col: message`` as printed on standard error."""
        fname = filename or self.filename or "<input>"
        return f"{fname}:{self.line}:{self.col}: {self.message}"

    def __str__(self):
        return self.diagnostic()


class UnsupportedConstructError(ParseError):
    def __init__(self, construct, line=0, col=0, filename=None):
        super().__init__(f"unsupported construct: {construct}", line, col, filename)
        self.construct = construct


class TransformError(TCoarsenError):
    """A kernel does not meet the preconditions of a transform."""


class IdDependentBranchError(TransformError):
    def __init__(self, conditions):
        self.conditions = list(conditions)
        listed = "; ".join(self.conditions)
        super().__init__(f"work-item-id-dependent branch prevents SIMD vectorization: {listed}")


class ExecutionError(TCoarsenError):
    """Raised by the interpreter when a launch cannot complete."""


class OutOfBoundsError(ExecutionError):
    def __init__(self, work_item, pointer, index, length):
        self.work_item = work_item
        self.pointer = pointer
        self.index = index
        super().__init__(
            f"out-of-bounds access by work-item {work_item}: {pointer}[{index}] "
            f"(length {length})")


class DataRaceError(ExecutionError):
    def __init__(self, pointer, index, first, second):
        self.pointer = pointer
        self.index = index
        self.work_items = (first, second)
        super().__init__(
            f"data race on {pointer}[{index}]: work-items {first} and {second} "
            f"store in the same phase")


class BarrierDivergenceError(ExecutionError):
    def __init__(self, group, arrived, size):
        self.group = group
        super().__init__(
            f"barrier divergence in work-group {group}: {arrived} of {size} "
            f"work-items reached the barrier")


class PreconditionError(TCoarsenError):
    """A launch violates an obligation recorded by a transform."""
