"""Exception types shared by all spoofkit modules.

Every data/validation problem derives from :class:`DataError` (itself a
``ValueError``), which the CLI maps to exit code 2.
"""


class DataError(ValueError):
    """Base class for invalid input data."""


class EmptyInput(DataError):
    def __init__(self, what="input"):
        super().__init__(f"EmptyInput: {what} contains no entries")


class MalformedLine(DataError):
    def __init__(self, line_no, text=""):
        self.line_no = line_no
        super().__init__(f"MalformedLine({line_no}): {text!r}")


class DuplicateUtterance(DataError):
    def __init__(self, utt_id):
        self.utt_id = utt_id
        super().__init__(f"DuplicateUtterance({utt_id})")


class BadLabel(DataError):
    def __init__(self, line_no, label=""):
        self.line_no = line_no
        super().__init__(f"BadLabel({line_no}): {label!r}")


class NonFiniteScore(DataError):
    def __init__(self, line_no):
        self.line_no = line_no
        super().__init__(f"NonFiniteScore({line_no})")


class ScoreRangeError(DataError):
    def __init__(self, utt_id, value):
        self.utt_id = utt_id
        super().__init__(f"ScoreRangeError({utt_id}): posterior {value!r} outside [0, 1]")


class EndBeforeStart(DataError):
    def __init__(self, line_no):
        self.line_no = line_no
        super().__init__(f"EndBeforeStart({line_no})")


class OverlappingSegments(DataError):
    def __init__(self, utt_id):
        self.utt_id = utt_id
        super().__init__(f"OverlappingSegments({utt_id})")


class CoverageGap(DataError):
    def __init__(self, utt_id, position):
        self.utt_id = utt_id
        self.position = position
        super().__init__(f"CoverageGap({utt_id}, {position})")


class MissingInKey(DataError):
    def __init__(self, utt_id):
        self.utt_id = utt_id
        super().__init__(f"MissingInKey({utt_id})")


class EmptyClass(DataError):
    def __init__(self, label):
        self.label = label
        super().__init__(f"EmptyClass({label})")


class SemanticsMismatch(DataError):
    def __init__(self, expected, got):
        super().__init__(f"SemanticsMismatch: expected {expected} scores, got {got}")


class WidthMismatch(DataError):
    def __init__(self, expected, got):
        super().__init__(f"WidthMismatch: calibrator takes {expected} inputs, got {got}")


class DegenerateRange(DataError):
    def __init__(self, value):
        super().__init__(f"DegenerateRange: all development scores equal {value!r}")


class IdSetMismatch(DataError):
    def __init__(self, detail=""):
        super().__init__(f"IdSetMismatch: {detail}")


class ResolutionMismatch(DataError):
    def __init__(self, a, b):
        super().__init__(f"ResolutionMismatch: {a!r} vs {b!r}")


class FrameCountMismatch(DataError):
    def __init__(self, utt_id, n_a, n_b):
        self.utt_id = utt_id
        super().__init__(f"FrameCountMismatch({utt_id}): {n_a} vs {n_b} frames")


class ZeroGlobalMean(DataError):
    def __init__(self):
        super().__init__("ZeroGlobalMean: contribution maps average to zero")


class ZeroPowerNoise(DataError):
    def __init__(self):
        super().__init__("ZeroPowerNoise: noise signal has zero power")


class SampleRateMismatch(DataError):
    def __init__(self, a, b):
        super().__init__(f"SampleRateMismatch: {a} Hz vs {b} Hz")


class UnsupportedFormat(DataError):
    def __init__(self, detail):
        super().__init__(f"UnsupportedFormat: {detail}")


class CorruptHeader(DataError):
    def __init__(self, detail):
        super().__init__(f"CorruptHeader: {detail}")


class NoConvergence(RuntimeWarning):
    """Issued when the calibration optimizer stops at ``max_iter``.

    The best iterate is still returned; ``grad_norm`` holds the final
    gradient infinity-norm.
    """

    def __init__(self, grad_norm, n_iter):
        self.grad_norm = grad_norm
        self.n_iter = n_iter
        super().__init__(
            f"NoConvergence: gradient norm {grad_norm:.3e} after {n_iter} iterations"
        )
