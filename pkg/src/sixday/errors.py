"""Exception types shared across the package.

Everything raised on bad data or failed numerics derives from
:class:`SixDayError`, so the CLI can map the whole family to one exit code.
"""


class SixDayError(Exception):
    """Base class for data and numerical errors."""


class MalformedRow(SixDayError):
    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class EmptyDataset(SixDayError):
    def __init__(self, message="dataset contains no performances"):
        super().__init__(message)


class DuplicateRaceId(SixDayError):
    def __init__(self, race_id, line=None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"race_id {race_id!r} redefined with conflicting metadata{where}")
        self.race_id = race_id
        self.line = line


class OutOfRange(SixDayError):
    pass


class NoConvergence(SixDayError):
    def __init__(self, iterations, sse):
        super().__init__(f"no convergence after {iterations} iterations (last SSE {sse:.6g})")
        self.iterations = iterations
        self.sse = sse


class DegenerateData(SixDayError):
    pass


class InsufficientBins(SixDayError):
    pass


class AllWalkersInvalid(SixDayError):
    pass


class NonFiniteLogPost(SixDayError):
    def __init__(self, params, value):
        super().__init__(f"log posterior returned {value!r} at parameters {list(params)!r}")
        self.params = params
        self.value = value


class EmptyChain(SixDayError):
    pass


class InsufficientTail(SixDayError):
    def __init__(self, count, required=10):
        super().__init__(f"tail sample has {count} performances, need at least {required}")
        self.count = count
        self.required = required


class DegenerateCDF(SixDayError):
    pass


class RecordBelowThreshold(SixDayError):
    def __init__(self, record, d_min):
        super().__init__(f"record {record} mi lies below the tail threshold {d_min} mi")
        self.record = record
        self.d_min = d_min


class NonMonotoneCDF(UserWarning):
    """Emitted when a posterior-expected CDF decreases beyond round-off."""
