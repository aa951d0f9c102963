"""Exception hierarchy.

``InputError`` subclasses describe bad files or configuration and map to exit
code 2 in the CLI. ``ModelError`` subclasses are raised while fitting or
evaluating and are recorded per cell by the protocol instead of aborting a run.
"""


class LongAdaptError(Exception):
    pass


class InputError(LongAdaptError):
    pass


class ParseError(InputError):
    pass


class MissingSession(InputError):
    pass


class SchemaError(InputError):
    pass


class NonMonotonicTimestamps(InputError):
    pass


class ColumnMismatch(InputError):
    pass


class ConfigError(InputError):
    pass


class ModelError(LongAdaptError):
    pass


class EmptyData(ModelError):
    pass


class EmptyTrainingSet(EmptyData):
    pass


class SingleClassData(ModelError):
    pass


class NonFiniteFeature(ModelError):
    pass


class DimensionMismatch(ModelError):
    pass


class InvalidSplit(ModelError):
    pass


class UnweightableModelKind(ModelError):
    pass


class TooFewTargetInstances(ModelError):
    pass


class SingleClassTarget(ModelError):
    pass


class EmptyBothDomains(ModelError):
    pass


class DegenerateCovariance(ModelError):
    pass


class SingleClass(ModelError):
    """Metric undefined because only one class is present."""


class AllZeroDifferences(ModelError):
    pass


class RowSumMismatch(ModelError):
    pass


class DegenerateAgreement(ModelError):
    pass


class EmptyResults(ModelError):
    pass
