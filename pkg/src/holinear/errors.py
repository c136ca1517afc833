"""Exception taxonomy.

Every error carries an exit code (used by the CLI) and an optional
``diagnostic`` dict that is serialised verbatim into error reports.
"""

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_CLASSIFICATION = 3
EXIT_PLAN = 4
EXIT_DIVERGED = 5
EXIT_NUMERIC = 6


class HolinearError(Exception):
    code = EXIT_NUMERIC

    def __init__(self, message="", **diagnostic):
        super().__init__(message)
        self.message = message
        self.diagnostic = diagnostic

    def to_dict(self):
        return {
            "type": type(self).__name__,
            "code": self.code,
            "message": self.message,
            "diagnostic": self.diagnostic,
        }


# spectral
class SingularOperator(HolinearError):
    code = EXIT_CLASSIFICATION


class SpectralMismatch(HolinearError):
    pass


class CutoffNotFound(HolinearError):
    pass


class NonHyperbolic(HolinearError):
    code = EXIT_CLASSIFICATION


# regularity
class DomainExceeded(HolinearError):
    pass


class DegenerateSample(HolinearError):
    pass


class AlphaMismatch(HolinearError):
    pass


class NotInvertibleBound(HolinearError):
    pass


class PreconditionLip(HolinearError):
    pass


# maps
class NoConvergence(HolinearError):
    pass


# bump
class BadPlateau(HolinearError):
    code = EXIT_PARSE


class InvertibilityLost(HolinearError):
    code = EXIT_PLAN


class NotHLinear(HolinearError):
    pass


# linearize
class NotAlphaContracting(HolinearError):
    code = EXIT_CLASSIFICATION


class NotAlphaHyperbolic(HolinearError):
    code = EXIT_CLASSIFICATION


class PlanInfeasible(HolinearError):
    code = EXIT_PLAN


class GraphTransformDiverged(HolinearError):
    pass


class ReparameterizationFailed(HolinearError):
    pass


class NotFlat(HolinearError):
    pass


class SeriesDiverged(HolinearError):
    code = EXIT_DIVERGED


class DomainMismatch(HolinearError):
    pass


# flows
class StepTooLarge(HolinearError):
    pass


class WrongDimension(HolinearError):
    code = EXIT_PARSE


class ContractionLost(HolinearError):
    pass


# cli
class ParseError(HolinearError):
    code = EXIT_PARSE
