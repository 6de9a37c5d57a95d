class KlDescentException(Exception):

    exit_code = 1


class KlDescentError(KlDescentException):
    pass


class KlDescentUsageError(KlDescentError):

    exit_code = 2


class KlDescentDomainError(KlDescentUsageError, ValueError):
    pass


class KlDescentShapeError(KlDescentDomainError):
    pass


class KlDescentRankError(KlDescentUsageError):
    pass


class KlDescentConditioningError(KlDescentUsageError):
    pass


class KlDescentConfigError(KlDescentUsageError):
    pass


class KlDescentDataError(KlDescentUsageError):
    pass


class KlDescentInnerSolverError(KlDescentError):

    def __init__(self, msg, residual=None):
        super(KlDescentInnerSolverError, self).__init__(msg)
        self.residual = residual


class KlDescentRegionEmptyError(KlDescentError):

    def __init__(self, attempts):
        self.attempts = attempts

    def __str__(self):
        return ("No point of the value band was accepted after {} rejection "
                "attempts (is the region empty?)".format(self.attempts))


class KlDescentScheduleError(KlDescentError):

    exit_code = 3

    def __init__(self, msg, index=None):
        super(KlDescentScheduleError, self).__init__(msg)
        self.index = index


class KlDescentDivergenceError(KlDescentError):

    exit_code = 4

    def __init__(self, k, value, trace=None):
        self.k = k
        self.value = value
        self.trace = trace

    def __repr__(self):
        return "{}(k={}, value={})".format(
            self.__class__.__name__, self.k, self.value)

    def __str__(self):
        return ("Objective became non-finite ({}) at iteration {}".format(
            self.value, self.k))


class KlDescentInsufficientDataError(KlDescentError):

    exit_code = 5

    def __init__(self, available, required=5):
        self.available = available
        self.required = required

    def __str__(self):
        return ("Rate fit needs at least {} tail points, only {} available"
                .format(self.required, self.available))
