class ChannelError(ValueError):
    """Invalid operating point, width mismatch or topology misuse."""


class RegimeError(ValueError):
    """A session was asked to run outside the regime its construction needs."""


class GuardExceeded(ValueError):
    """A search was asked for an instance larger than its declared guard."""


class OracleError(RuntimeError):
    """The oracle could not back a formula value with a certified witness."""


class DecodeFailure(RuntimeError):
    def __init__(self, failures):
        self.failures = list(failures)
        first = self.failures[0] if self.failures else None
        super().__init__(f"{len(self.failures)} decoding failure(s), "
                         f"first: {first}")
