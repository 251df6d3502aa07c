"""Exception hierarchy for the broken-sample estimator."""


class BrokenSampleError(Exception):
    """Base class for all errors raised by this package."""


class DatasetError(BrokenSampleError, ValueError):
    pass


class EmptyDataset(DatasetError):
    pass


class RaggedBatchSizes(DatasetError):
    pass


class NonFiniteCoordinate(DatasetError):
    pass


class InvalidSize(BrokenSampleError, ValueError):
    pass


class ParamOutOfDomain(BrokenSampleError, ValueError):
    pass


class NoClosedForm(BrokenSampleError, NotImplementedError):
    pass


class NonFiniteLoss(BrokenSampleError, ArithmeticError):
    pass


class NonFiniteObjective(BrokenSampleError, ArithmeticError):
    pass


class StateSpaceTooLarge(BrokenSampleError, ValueError):
    pass


class BatchTooLarge(BrokenSampleError, ValueError):
    pass


class DegenerateCV(BrokenSampleError, ArithmeticError):
    pass


class MissingInput(BrokenSampleError, FileNotFoundError):
    pass


class ConfigError(BrokenSampleError, ValueError):
    pass
