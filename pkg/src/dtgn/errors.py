"""Exception hierarchy shared by every dtgn module.

All domain errors derive from :class:`DTGNError` so the command line can map
them to exit code 1; configuration problems derive from :class:`ConfigError`
and map to exit code 2.
"""


class DTGNError(Exception):
    pass


class ConfigError(DTGNError):
    pass


# structural causal models
class CycleError(DTGNError):
    pass


class DanglingVariableError(DTGNError):
    pass


class InvalidPriorError(DTGNError):
    pass


class UnknownVariableError(DTGNError):
    pass


class LatentInterventionError(DTGNError):
    pass


class IncompleteNoiseError(DTGNError):
    pass


class InfiniteDomainError(DTGNError):
    pass


class ExplosionError(DTGNError):
    pass


class ZeroEvidenceError(DTGNError):
    pass


# tensors
class ShapeMismatchError(DTGNError, ValueError):
    pass


class NonScalarLossError(DTGNError, ValueError):
    pass


# data
class InvalidEFError(DTGNError, ValueError):
    pass


class MalformedPGMError(DTGNError):
    pass


class MissingMetadataError(DTGNError):
    pass


class EmptyDatasetError(DTGNError):
    pass


# training
class MissingCounterfactualLabelError(DTGNError):
    pass


class MissingExpertError(DTGNError):
    pass


class MissingCheckpointError(DTGNError):
    pass


# metrics
class LengthMismatchError(DTGNError, ValueError):
    pass


class ZeroVarianceError(DTGNError, ValueError):
    pass


class DegenerateAreaError(DTGNError):
    pass
