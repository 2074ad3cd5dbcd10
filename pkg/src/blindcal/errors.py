"""Exception hierarchy shared by every module of the package."""


class BlindCalError(Exception):
    """Base class. ``code`` is a stable machine-readable identifier."""

    code = "blindcal_error"


class NotHermitian(BlindCalError):
    code = "not_hermitian"


class SparsityTooLarge(BlindCalError):
    code = "sparsity_too_large"


class NonPositiveDiagonal(BlindCalError):
    code = "non_positive_diagonal"


class VanishingSubdiagonal(BlindCalError):
    code = "vanishing_subdiagonal"

    def __init__(self, index, magnitude):
        super().__init__(f"|r[{index}][{index - 1}]| = {magnitude:.3e} is numerically zero")
        self.index = index
        self.magnitude = magnitude


class SingularSystem(BlindCalError):
    code = "singular_system"


class InsufficientPeaks(BlindCalError):
    code = "insufficient_peaks"

    def __init__(self, found, wanted):
        super().__init__(f"found {found} local maxima, wanted {wanted}")
        self.found = found
        self.wanted = wanted


class ZeroInitialVector(BlindCalError):
    code = "zero_initial_vector"


class StepUnderflow(BlindCalError):
    """Raised by the line search when the step drops below ``eta_min``.

    This is the normal termination signal of the descent loop, not a failure.
    """

    code = "step_underflow"


class ZeroTrueGain(BlindCalError):
    code = "zero_true_gain"


class BadK(BlindCalError):
    code = "bad_k"


class InvalidConfig(BlindCalError):
    code = "invalid_config"

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
