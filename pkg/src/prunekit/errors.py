"""Exception hierarchy shared across the toolkit.

Every error carries a stable ``category`` string so the CLI can emit
machine-readable diagnostics without string-matching messages.
"""


class PrunekitError(Exception):
    category = "PrunekitError"

    def __init__(self, message: str, **detail):
        super().__init__(message)
        self.detail = detail


class ShapeMismatch(PrunekitError):
    category = "ShapeMismatch"


class ZeroExtent(PrunekitError):
    category = "ZeroExtent"


class NonPositiveVariance(PrunekitError):
    category = "NonPositiveVariance"


class MissingWeights(PrunekitError):
    category = "MissingWeights"


class EmptyCalibration(PrunekitError):
    category = "EmptyCalibration"


class InvalidScore(PrunekitError):
    category = "InvalidScore"


class UnknownLayer(PrunekitError):
    category = "UnknownLayer"


class RatioOutOfRange(PrunekitError):
    category = "RatioOutOfRange"


class PlanSpecMismatch(PrunekitError):
    category = "PlanSpecMismatch"


class WouldEmptyLayer(PrunekitError):
    category = "WouldEmptyLayer"


class NoPositives(PrunekitError):
    category = "NoPositives"


class AllClassesEmpty(PrunekitError):
    category = "AllClassesEmpty"


class EmptyDataset(PrunekitError):
    category = "EmptyDataset"


class DivergedLoss(PrunekitError):
    category = "DivergedLoss"


class FingerprintMismatch(PrunekitError):
    category = "FingerprintMismatch"


class CorruptBlob(PrunekitError):
    category = "CorruptBlob"


class UnknownVersion(PrunekitError):
    category = "UnknownVersion"
