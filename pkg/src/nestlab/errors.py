"""Exception hierarchy.

Every error raised by the package derives from :class:`NestlabError` so the
command line can map failures onto exit codes in one place.
"""


class NestlabError(Exception):
    """Base class for all package errors."""


class InvalidInput(NestlabError, ValueError):
    pass


class NegativeRadicand(NestlabError, ValueError):
    pass


class NoSignChange(NestlabError, ValueError):
    pass


class PrecisionExhausted(NestlabError, ArithmeticError):
    """Working precision can no longer resolve the objects being computed."""


# geometry on intervals

class OutsideLine(NestlabError, ValueError):
    pass


class DegenerateFlank(NestlabError, ValueError):
    pass


class NotNested(NestlabError, ValueError):
    pass


class NegativeCoordinate(NestlabError, ValueError):
    pass


class GapContainsCritical(NestlabError, ValueError):
    """The asymmetric length is undefined when the gap contains the critical point."""


# dynamics

class CriticalOrbitPoint(NestlabError, ValueError):
    pass


class FoldEncountered(NestlabError, RuntimeError):
    """A pullback straddled the critical value at a step that must be monotone."""


class OutsideDomain(NestlabError, ValueError):
    pass


# nest construction

class Escape(NestlabError):
    pass


class Degenerate(NestlabError):
    pass


class NonRecurrent(NestlabError):
    pass


# report quantities

class MissingLevel(NestlabError, LookupError):
    pass


class NoNonCentral(NestlabError, LookupError):
    pass


class DistanceZero(NestlabError, ZeroDivisionError):
    pass


class NoAdmissiblePair(NestlabError, LookupError):
    pass


class Unreachable(NestlabError, LookupError):
    pass


# search and verification

class NotRealized(NestlabError):
    pass


class InsufficientLevels(NestlabError):
    pass
