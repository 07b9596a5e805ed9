"""Exception types shared across the lab."""


class LabError(Exception):
    """Base class for all errors raised by onesided_lab."""


class NonIntegrable(LabError):
    pass


class ToleranceNotMet(LabError):
    pass


class EmptyDomain(LabError):
    pass


class AllEvaluationsFailed(LabError):
    pass


class NoValidExponent(LabError):
    def __init__(self, message, violating_interval=None):
        super().__init__(message)
        self.violating_interval = violating_interval


class Inconclusive(LabError):
    pass


class InvalidParams(LabError):
    pass


class NonConvergentPV(LabError):
    pass


class InvalidGeometry(LabError):
    pass


class ThetaOutOfRange(LabError):
    pass


class ExponentCollapse(LabError):
    pass


class OrderViolation(LabError):
    pass


class NoAdmissibleTheta(LabError):
    pass


class NormalizationFailure(LabError):
    pass


class PreconditionViolation(LabError):
    pass


class ExponentRelationViolated(LabError):
    pass


class ConfigInvalid(LabError):
    pass


class UnknownExperiment(LabError):
    pass
