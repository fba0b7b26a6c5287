"""Error hierarchy shared by the simulator, the attacks and the CLI.

Every error carries the process exit code the CLI reports for it.
"""

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ATTACK_STAGE = 3
EXIT_INTERNAL = 4


class SimulationError(Exception):
    """Base class for every error raised by this package"""
    exit_code = EXIT_INTERNAL


class ValidationError(SimulationError):
    """Invalid input; always names the offending field"""
    exit_code = EXIT_VALIDATION

    def __init__(self, field, message):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class PlaintextRangeError(SimulationError):
    exit_code = EXIT_VALIDATION


class KeyMismatchError(SimulationError):
    """Ciphertexts or keys from different keypairs were combined"""


class DepthExhaustedError(SimulationError):
    """A multiplication would exceed the scheme's multiplicative depth"""


class NoiseBudgetExhaustedError(SimulationError):
    """Noise grew past the point where decryption is still guaranteed"""


class SealError(SimulationError):
    """Sealed envelope failed authentication or could not be parsed"""
    exit_code = EXIT_VALIDATION


class LinearSystemError(SimulationError):
    pass


class UnderdeterminedSystemError(LinearSystemError):
    """Coefficient matrix has rank < 2"""


class InconsistentSystemError(LinearSystemError):
    """Rows admit no common solution"""


class InconsistentDataError(SimulationError):
    """Recovered values disagree with the observed differences"""


class AttackStageError(SimulationError):
    """An attack step failed; stage names the step"""
    exit_code = EXIT_ATTACK_STAGE

    def __init__(self, stage, message):
        self.stage = stage
        self.message = message
        super().__init__(f"[{stage}] {message}")


class InternalAssertionError(SimulationError):
    exit_code = EXIT_INTERNAL
